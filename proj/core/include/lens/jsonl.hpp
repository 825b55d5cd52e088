#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace lens {

using Json = nlohmann::json;

// One JSON value per line. nlohmann objects keep keys sorted, so dump()
// output is stable across runs; all JSONL written by the pipeline goes
// through these helpers.
std::vector<Json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<Json>& rows);
void for_each_jsonl(const std::string& path, const std::function<void(const Json&)>& fn);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& value);

}  // namespace lens
