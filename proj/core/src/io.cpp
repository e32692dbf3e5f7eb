#include "diffant/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "diffant/errors.hpp"

namespace diffant {
namespace {

namespace fs = std::filesystem;

void write_then_rename(const fs::path& path, const std::string& content, bool binary) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

bool is_text_path(const fs::path& path) { return path.extension() == ".txt"; }

}  // namespace

void atomic_write(const fs::path& path, const std::string& content) {
  write_then_rename(path, content, false);
}

void atomic_write_binary(const fs::path& path, const std::string& content) {
  write_then_rename(path, content, true);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_features(const fs::path& path, const Eigen::MatrixXd& features) {
  const int t = static_cast<int>(features.rows());
  const int k = static_cast<int>(features.cols());
  char header[17];
  std::snprintf(header, sizeof(header), "%7d %7d\n", k, t);

  if (is_text_path(path)) {
    std::ostringstream out;
    out << header;
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < k; ++j) out << (j ? " " : "") << features(i, j);
      out << "\n";
    }
    atomic_write(path, out.str());
    return;
  }

  std::string blob(header, 16);
  blob.reserve(16 + static_cast<std::size_t>(t) * k * 4);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < k; ++j) {
      const float v = static_cast<float>(features(i, j));
      char bytes[4];
      std::memcpy(bytes, &v, 4);
      blob.append(bytes, 4);
    }
  atomic_write_binary(path, blob);
}

Eigen::MatrixXd read_features(const fs::path& path) {
  const std::string blob = read_file(path);
  if (blob.size() < 16) throw DataError("feature file too short: " + path.string());
  int k = 0, t = 0;
  if (std::sscanf(blob.c_str(), "%d %d", &k, &t) != 2 || k <= 0 || t <= 0)
    throw DataError("bad feature header: " + path.string());

  Eigen::MatrixXd m(t, k);
  if (is_text_path(path)) {
    std::istringstream in(blob.substr(blob.find('\n') + 1));
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < k; ++j)
        if (!(in >> m(i, j))) throw DataError("truncated text features: " + path.string());
    return m;
  }

  const std::size_t need = 16 + static_cast<std::size_t>(t) * k * 4;
  if (blob.size() != need)
    throw DataError("feature payload size mismatch: " + path.string());
  const char* p = blob.data() + 16;
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < k; ++j) {
      float v;
      std::memcpy(&v, p, 4);
      p += 4;
      m(i, j) = static_cast<double>(v);
    }
  return m;
}

void write_frame_labels(const fs::path& path, const std::vector<std::string>& labels) {
  std::ostringstream out;
  for (const auto& l : labels) out << l << "\n";
  atomic_write(path, out.str());
}

std::vector<std::string> read_frame_labels(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  if (labels.empty()) throw DataError("empty label file: " + path.string());
  return labels;
}

std::string config_echo_header(const std::vector<std::pair<std::string, std::string>>& echo) {
  std::ostringstream out;
  for (const auto& [k, v] : echo) out << "# " << k << "=" << v << "\n";
  return out.str();
}

std::vector<std::pair<std::string, std::string>> parse_echo_header(const std::string& content) {
  std::vector<std::pair<std::string, std::string>> echo;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) != 0) break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    echo.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
  }
  return echo;
}

}  // namespace diffant
