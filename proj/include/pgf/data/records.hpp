#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgf::data {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One corpus image, named "<River>_<Year>_<Index>.<ext>". River names may
// themselves contain underscores; the name is split from the right.
struct ImageRecord {
  std::filesystem::path path;
  std::string river;
  int year = 0;
  std::size_t index = 0;
  std::size_t width = 0;
  std::size_t height = 0;

  // Formatting details needed to reproduce the original name exactly.
  std::size_t index_digits = 4;
  std::string extension = ".jpg";
  // Empty for a canonical file; "rot1" etc. for "<stem>_rot1.png".
  std::string variant;

  std::string stem() const;  // "<River>_<Year>_<Index>"
  bool operator==(const ImageRecord&) const = default;
};

// Throws DataError naming the failing segment (river, year, index, extension).
ImageRecord parse_filename(const std::string& name);
std::string format_filename(const ImageRecord& rec);

// Accepts canonical names and "<canonical stem>_<variant>.<ext>".
ImageRecord parse_corpus_name(const std::string& name);

// CSV with header path,river,year,index,width,height. Paths are written
// relative to the manifest's directory when possible.
void write_manifest(const std::filesystem::path& csv, const std::vector<ImageRecord>& records);
std::vector<ImageRecord> read_manifest(const std::filesystem::path& csv);

struct ScanResult {
  std::vector<ImageRecord> records;  // sorted by file name
  std::vector<std::string> rejected;  // "<file>: <reason>"
};

// Parses every .jpg/.jpeg/.png under `dir` (non-recursive) and reads sizes.
ScanResult scan_directory(const std::filesystem::path& dir);

}  // namespace pgf::data
