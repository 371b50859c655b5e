#include "pgf/data/records.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "pgf/image/image.hpp"

namespace pgf::data {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool known_extension(const std::string& ext) {
  const auto e = lower(ext);
  return e == ".jpg" || e == ".jpeg" || e == ".png";
}

[[noreturn]] void fail(const std::string& name, const std::string& segment, const std::string& why) {
  throw DataError("bad image name '" + name + "': " + segment + " segment " + why +
                  " (expected <River>_<Year>_<Index>.jpg)");
}

// Parses a stem that must be exactly "<River>_<Year>_<Index>".
ImageRecord parse_stem(const std::string& name, const std::string& stem) {
  const auto last = stem.rfind('_');
  if (last == std::string::npos) fail(name, "index", "is missing");
  const auto second = last == 0 ? std::string::npos : stem.rfind('_', last - 1);
  if (second == std::string::npos) fail(name, "year", "is missing");

  ImageRecord rec;
  rec.river = stem.substr(0, second);
  const auto year = stem.substr(second + 1, last - second - 1);
  const auto index = stem.substr(last + 1);
  if (rec.river.empty()) fail(name, "river", "is empty");
  if (year.size() != 4 || !all_digits(year)) fail(name, "year", "'" + year + "' is not a 4-digit year");
  if (!all_digits(index)) fail(name, "index", "'" + index + "' is not a number");
  if (index.size() > 18) fail(name, "index", "'" + index + "' is too long");
  rec.year = std::stoi(year);
  std::from_chars(index.data(), index.data() + index.size(), rec.index);
  rec.index_digits = index.size();
  return rec;
}

std::pair<std::string, std::string> split_extension(const std::string& name) {
  const auto dot = name.rfind('.');
  if (dot == std::string::npos || dot == 0) fail(name, "extension", "is missing");
  auto ext = name.substr(dot);
  if (!known_extension(ext)) fail(name, "extension", "'" + ext + "' is not .jpg/.jpeg/.png");
  return {name.substr(0, dot), ext};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

}  // namespace

std::string ImageRecord::stem() const {
  auto idx = std::to_string(index);
  if (idx.size() < index_digits) idx.insert(0, index_digits - idx.size(), '0');
  return river + "_" + std::to_string(year) + "_" + idx;
}

ImageRecord parse_filename(const std::string& name) {
  const auto [stem, ext] = split_extension(name);
  auto rec = parse_stem(name, stem);
  rec.extension = ext;
  rec.path = name;
  return rec;
}

std::string format_filename(const ImageRecord& rec) {
  auto out = rec.stem();
  if (!rec.variant.empty()) out += "_" + rec.variant;
  return out + rec.extension;
}

ImageRecord parse_corpus_name(const std::string& name) {
  try {
    return parse_filename(name);
  } catch (const DataError& original) {
    const auto [stem, ext] = split_extension(name);
    const auto cut = stem.rfind('_');
    if (cut == std::string::npos || cut + 1 == stem.size()) throw;
    ImageRecord rec;
    try {
      rec = parse_stem(name, stem.substr(0, cut));
    } catch (const DataError&) {
      throw original;  // the canonical-name failure is the more useful message
    }
    rec.variant = stem.substr(cut + 1);
    rec.extension = ext;
    rec.path = name;
    return rec;
  }
}

void write_manifest(const fs::path& csv, const std::vector<ImageRecord>& records) {
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  std::ofstream out(csv, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + csv.string());
  const auto base = csv.parent_path();
  out << "path,river,year,index,width,height\n";
  for (const auto& r : records) {
    auto p = r.path;
    if (p.is_absolute() && !base.empty()) {
      std::error_code ec;
      auto rel = fs::relative(p, fs::absolute(base), ec);
      if (!ec && !rel.empty() && *rel.begin() != "..") p = rel;
    }
    out << csv_field(p.generic_string()) << ',' << csv_field(r.river) << ',' << r.year << ',' << r.index << ','
        << r.width << ',' << r.height << '\n';
  }
  if (!out) throw DataError("failed writing manifest " + csv.string());
}

std::vector<ImageRecord> read_manifest(const fs::path& csv) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw DataError("cannot read manifest " + csv.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,river,year,index,width,height") {
    throw DataError(csv.string() + ": unexpected header '" + line + "'");
  }
  std::vector<ImageRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    const auto where = csv.string() + ":" + std::to_string(lineno);
    if (f.size() != 6) throw DataError(where + ": expected 6 fields, got " + std::to_string(f.size()));
    fs::path p = f[0];
    ImageRecord rec;
    try {
      rec = parse_corpus_name(p.filename().string());
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (rec.river != f[1] || std::to_string(rec.year) != f[2] || std::to_string(rec.index) != f[3]) {
      throw DataError(where + ": fields disagree with file name " + p.filename().string());
    }
    rec.path = p.is_absolute() ? p : csv.parent_path() / p;
    try {
      rec.width = std::stoul(f[4]);
      rec.height = std::stoul(f[5]);
    } catch (const std::exception&) {
      throw DataError(where + ": bad width/height");
    }
    if (rec.width == 0 || rec.height == 0) throw DataError(where + ": width and height must be >= 1");
    out.push_back(std::move(rec));
  }
  return out;
}

ScanResult scan_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && known_extension(e.path().extension().string())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  ScanResult out;
  for (const auto& f : files) {
    try {
      auto rec = parse_corpus_name(f.filename().string());
      rec.path = f;
      std::tie(rec.width, rec.height) = image::image_size(f);
      out.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      out.rejected.push_back(f.filename().string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace pgf::data
