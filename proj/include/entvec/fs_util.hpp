#pragma once

#include <filesystem>
#include <functional>
#include <string>

namespace entvec {

// Builds stage output in `<final>.tmp` and renames it into place, so a failed
// run never leaves a partially written output directory. `build` receives the
// temporary directory; `check_overwrite` (optional) inspects an existing
// destination and throws to refuse replacing it.
void write_directory_atomically(const std::filesystem::path& final_dir,
                                const std::function<void(const std::filesystem::path&)>& build,
                                const std::function<void(const std::filesystem::path&)>& check_overwrite = {});

// Same pattern for a single output file.
void write_file_atomically(const std::filesystem::path& final_path,
                           const std::function<void(const std::filesystem::path&)>& build);

std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace entvec
