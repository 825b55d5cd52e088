#include "lens/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "lens/errors.hpp"

namespace lens {

std::vector<Json> read_jsonl(const std::string& path) {
    std::vector<Json> rows;
    for_each_jsonl(path, [&rows](const Json& j) { rows.push_back(j); });
    return rows;
}

void for_each_jsonl(const std::string& path, const std::function<void(const Json&)>& fn) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError(path + ":" + std::to_string(lineno) + ": invalid JSON");
        fn(j);
    }
}

void write_jsonl(const std::string& path, const std::vector<Json>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& row : rows) out << row.dump() << '\n';
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << content;
}

Json read_json_file(const std::string& path) {
    Json j = Json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) throw DataError(path + ": invalid JSON");
    return j;
}

void write_json_file(const std::string& path, const Json& value) {
    write_text_file(path, value.dump(2) + "\n");
}

}  // namespace lens
