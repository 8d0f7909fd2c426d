#include "entvec/fs_util.hpp"

#include <fstream>
#include <sstream>

#include "entvec/errors.hpp"

namespace entvec {

namespace fs = std::filesystem;

void write_directory_atomically(const fs::path& final_dir,
                                const std::function<void(const fs::path&)>& build,
                                const std::function<void(const fs::path&)>& check_overwrite) {
  if (fs::exists(final_dir) && !fs::is_directory(final_dir))
    throw Error("output path exists and is not a directory: " + final_dir.string());

  const fs::path tmp = final_dir.parent_path() / (final_dir.filename().string() + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    build(tmp);
    if (fs::exists(final_dir)) {
      if (check_overwrite) check_overwrite(final_dir);
      fs::remove_all(final_dir);
    }
    fs::rename(tmp, final_dir);
  } catch (...) {
    std::error_code ignored;
    fs::remove_all(tmp, ignored);
    throw;
  }
}

void write_file_atomically(const fs::path& final_path,
                           const std::function<void(const fs::path&)>& build) {
  const fs::path tmp = final_path.parent_path() / (final_path.filename().string() + ".tmp");
  std::error_code ignored;
  fs::remove(tmp, ignored);
  try {
    build(tmp);
    fs::rename(tmp, final_path);
  } catch (...) {
    fs::remove(tmp, ignored);
    throw;
  }
}

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace entvec
