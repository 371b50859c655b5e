#include "pgf/image/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

namespace pgf::image {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageError("cannot open " + path.string());
  return f;
}

bool is_png(std::FILE* f) {
  unsigned char sig[8] = {};
  const std::size_t n = std::fread(sig, 1, 8, f);
  std::rewind(f);
  return n == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

bool is_jpeg(std::FILE* f) {
  unsigned char sig[3] = {};
  const std::size_t n = std::fread(sig, 1, 3, f);
  std::rewind(f);
  return n == 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF;
}

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}
void png_warning_fn(png_structp, png_const_charp) {}

Image read_png(std::FILE* f, const std::filesystem::path& path, bool header_only) {
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError("libpng initialisation failed");
  }
  Image img;
  std::vector<unsigned char> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError("corrupt PNG " + path.string() + ": " + err);
  }
  png_init_io(png, f);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  if (header_only) {
    png_destroy_read_struct(&png, &info, nullptr);
    Image out;
    out.width = w;
    out.height = h;
    return out;
  }
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // native little-endian uint16
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  const bool wide = png_get_bit_depth(png, info) == 16;
  buffer.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image(w, h, 3);
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (wide) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t v;
      std::memcpy(&v, buffer.data() + 2 * i, 2);
      img.pixels[i] = static_cast<float>(v) / 65535.0f;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<float>(buffer[i]) / 255.0f;
  }
  return img;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* e = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, e->message);
  std::longjmp(e->jump, 1);
}

Image read_jpeg(std::FILE* f, const std::filesystem::path& path, bool header_only) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.mgr.output_message = [](j_common_ptr) {};
  std::vector<unsigned char> buffer;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageError("corrupt JPEG " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  if (header_only) {
    Image out;
    out.width = cinfo.image_width;
    out.height = cinfo.image_height;
    jpeg_destroy_decompress(&cinfo);
    return out;
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const std::size_t w = cinfo.output_width, h = cinfo.output_height;
  buffer.resize(w * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buffer.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  Image img(w, h, 3);
  for (std::size_t i = 0; i < buffer.size(); ++i) img.pixels[i] = static_cast<float>(buffer[i]) / 255.0f;
  return img;
}

Image read_any(const std::filesystem::path& path, bool header_only) {
  File f = open(path, "rb");
  if (is_png(f.get())) return read_png(f.get(), path, header_only);
  if (is_jpeg(f.get())) return read_jpeg(f.get(), path, header_only);
  throw ImageError("unsupported image format: " + path.string());
}

unsigned quantize_sample(float v, unsigned maxv) {
  const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
  return static_cast<unsigned>(std::lround(static_cast<double>(c) * maxv));
}

void require_rgb(const Image& img) {
  if (img.channels != 3 || img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height * 3) {
    throw ImageError("expected a non-empty 3-channel image");
  }
}

}  // namespace

Image read_image(const std::filesystem::path& path) { return read_any(path, false); }

std::pair<std::size_t, std::size_t> image_size(const std::filesystem::path& path) {
  const Image header = read_any(path, true);
  return {header.width, header.height};
}

void write_png(const std::filesystem::path& path, const Image& img, int bit_depth) {
  require_rgb(img);
  if (bit_depth != 8 && bit_depth != 16) throw ImageError("PNG bit depth must be 8 or 16");
  const std::size_t n = img.pixels.size();
  const std::size_t bytes = bit_depth / 8;
  std::vector<unsigned char> buffer(n * bytes);
  for (std::size_t i = 0; i < n; ++i) {
    if (bit_depth == 8) {
      buffer[i] = static_cast<unsigned char>(quantize_sample(img.pixels[i], 255));
    } else {
      const unsigned v = quantize_sample(img.pixels[i], 65535);
      buffer[2 * i] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
      buffer[2 * i + 1] = static_cast<unsigned char>(v & 0xFF);
    }
  }
  File f = open(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageError("failed writing " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), bit_depth,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 3);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = buffer.data() + y * img.width * 3 * bytes;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw ImageError("failed writing " + path.string());
}

void write_jpeg(const std::filesystem::path& path, const Image& img, int quality) {
  require_rgb(img);
  std::vector<unsigned char> buffer(img.pixels.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = static_cast<unsigned char>(quantize_sample(img.pixels[i], 255));
  File f = open(path, "wb");
  jpeg_compress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    throw ImageError("failed writing " + path.string() + ": " + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f.get());
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = buffer.data() + static_cast<std::size_t>(cinfo.next_scanline) * img.width * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

Image quantize(const Image& img, int bit_depth) {
  const unsigned maxv = (1u << bit_depth) - 1;
  Image out = img;
  for (auto& v : out.pixels) v = static_cast<float>(quantize_sample(v, maxv)) / static_cast<float>(maxv);
  return out;
}

template <typename T>
Tensor<T> to_tensor(const Image& img) {
  require_rgb(img);
  Tensor<T> out(Shape{3, img.height, img.width});
  auto po = out.data();
  const std::size_t plane = img.width * img.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) po[c * plane + i] = static_cast<T>(img.pixels[i * 3 + c]) * T{2} - T{1};
  return out;
}

template <typename T>
Image from_tensor(const Tensor<T>& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw ShapeError("expected [3, H, W], got " + to_string(chw.shape()));
  Image img(chw.dim(2), chw.dim(1), 3);
  auto p = chw.data();
  const std::size_t plane = img.width * img.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      img.pixels[i * 3 + c] = std::clamp(static_cast<float>((p[c * plane + i] + T{1}) / T{2}), 0.0f, 1.0f);
    }
  return img;
}

template <typename T>
Image tile_grid(const Tensor<T>& batch, std::size_t cols) {
  if (batch.rank() != 4 || batch.dim(1) != 3) throw ShapeError("expected [N, 3, H, W], got " + to_string(batch.shape()));
  if (cols == 0) throw std::invalid_argument("grid needs at least one column");
  const std::size_t n = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
  const std::size_t rows = (n + cols - 1) / cols;
  Image grid(cols * w, rows * h, 3);
  auto p = batch.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t gx = (i % cols) * w, gy = (i / cols) * h;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const T v = p[((i * 3 + c) * h + y) * w + x];
          grid.at(gx + x, gy + y, c) = std::clamp(static_cast<float>((v + T{1}) / T{2}), 0.0f, 1.0f);
        }
  }
  return grid;
}

template Tensor<float> to_tensor<float>(const Image&);
template Tensor<double> to_tensor<double>(const Image&);
template Image from_tensor<float>(const Tensor<float>&);
template Image from_tensor<double>(const Tensor<double>&);
template Image tile_grid<float>(const Tensor<float>&, std::size_t);
template Image tile_grid<double>(const Tensor<double>&, std::size_t);

}  // namespace pgf::image
