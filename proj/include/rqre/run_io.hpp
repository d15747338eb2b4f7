#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace rqre {

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
// Write via a temp file and rename, so readers never observe partial content.
void atomic_write_file(const std::string& path, const std::string& content);

// Flat key=value manifest, one pair per line.
void write_manifest(const std::string& path,
                    const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_manifest(const std::string& path);

}  // namespace rqre
