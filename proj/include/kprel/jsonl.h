#ifndef KPREL_JSONL_H_
#define KPREL_JSONL_H_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace kprel::jsonl {

// Reads one JSON value per non-blank line. Errors carry the 1-based line number.
std::vector<nlohmann::json> read_file(const std::filesystem::path& path);

void write_file(const std::filesystem::path& path,
                const std::vector<nlohmann::json>& rows);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// RFC 4180 style: comma separated, double quotes escape commas and quotes.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

template <typename T>
std::vector<T> read_as(const std::filesystem::path& path,
                       const std::function<T(const nlohmann::json&)>& parse) {
  std::vector<T> out;
  for (const auto& row : read_file(path)) out.push_back(parse(row));
  return out;
}

}  // namespace kprel::jsonl

#endif  // KPREL_JSONL_H_
