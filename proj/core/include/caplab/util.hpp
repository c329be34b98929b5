#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace caplab {

// Thrown for invalid inputs, contract violations, and missing artifacts.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// processed exactly once and may only write to index-local state, so
// results are identical for any thread count. threads <= 1 runs inline.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// Thread-count resolution: explicit value, else CAPLAB_THREADS, else 1.
std::size_t resolve_threads(std::size_t configured);

std::vector<std::string> split_ws(const std::string& text);
std::string join_ws(const std::vector<std::string>& tokens);

}  // namespace caplab
