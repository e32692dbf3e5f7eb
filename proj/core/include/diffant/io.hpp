#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace diffant {

// All writers go through a temp file + rename so readers never observe a
// partially written artifact.
void atomic_write(const std::filesystem::path& path, const std::string& content);
void atomic_write_binary(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

// Feature matrix, T rows x K cols. Binary layout: 16-byte ASCII header
// ("%7d %7d\n" -> K then T) followed by row-major little-endian float32.
// Paths ending in .txt use the whitespace-text variant (same K T header line).
void write_features(const std::filesystem::path& path, const Eigen::MatrixXd& features);
Eigen::MatrixXd read_features(const std::filesystem::path& path);

// One label name per line, one line per frame.
void write_frame_labels(const std::filesystem::path& path, const std::vector<std::string>& labels);
std::vector<std::string> read_frame_labels(const std::filesystem::path& path);

// `# key=value` lines; used to stamp the active config into artifacts.
std::string config_echo_header(const std::vector<std::pair<std::string, std::string>>& echo);
// Parses the `# key=value` prefix of an artifact (and ignores it elsewhere).
std::vector<std::pair<std::string, std::string>> parse_echo_header(const std::string& content);

}  // namespace diffant
