#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "deitfake/errors.hpp"
#include "deitfake/image.hpp"

namespace deitfake {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  return f;
}

ImageBuffer load_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  ImageBuffer out(img.width, img.height);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = buf[(y * out.width + x) * 3 + c] / 255.0f;
    }
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

ImageBuffer load_jpeg(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("cannot decode JPEG " + path.string() + ": " + jerr.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  ImageBuffer out(cinfo.output_width, cinfo.output_height);
  std::vector<JSAMPLE> row(static_cast<std::size_t>(cinfo.output_width) * cinfo.output_components);
  while (cinfo.output_scanline < cinfo.output_height) {
    const std::size_t y = cinfo.output_scanline;
    JSAMPROW rows[1] = {row.data()};
    jpeg_read_scanlines(&cinfo, rows, 1);
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = row[x * 3 + c] / 255.0f;
    }
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

ImageBuffer load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char ch = 0;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (!std::isspace(static_cast<unsigned char>(ch))) {
        t.push_back(ch);
        break;
      }
    }
    while (in.get(ch) && !std::isspace(static_cast<unsigned char>(ch))) t.push_back(ch);
    return t;
  };
  if (token() != "P6") throw IoError(path.string() + ": only binary PPM (P6) is supported");
  std::size_t w = 0;
  std::size_t h = 0;
  long maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stol(token());
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval <= 0 || maxval > 65535) throw IoError(path.string() + ": malformed PPM header");
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(w * h * 3 * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IoError(path.string() + ": truncated PPM data");
  ImageBuffer out(w, h);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t i = ((y * w + x) * 3 + c) * bytes;
        const unsigned v = bytes == 2 ? (raw[i] << 8U) | raw[i + 1] : raw[i];
        out.at(c, y, x) = static_cast<float>(v) * scale;
      }
    }
  }
  return out;
}

std::string lower_ext(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return e;
}

}  // namespace

ImageBuffer load_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw IoError("no such image file: " + path.string());
  const auto ext = lower_ext(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return load_jpeg(path);
  if (ext == ".ppm") return load_ppm(path);
  throw IoError("unsupported image format: " + path.string());
}

void save_png(const std::filesystem::path& path, const ImageBuffer& image) {
  if (image.empty()) throw IoError("cannot write an empty image");
  std::vector<png_byte> buf(image.width * image.height * 3);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        buf[(y * image.width + x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0f));
      }
    }
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

void save_ppm16(const std::filesystem::path& path, const ImageBuffer& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n65535\n";
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        const auto q = static_cast<unsigned>(std::lround(v * 65535.0f));
        out.put(static_cast<char>(q >> 8U));
        out.put(static_cast<char>(q & 0xFFU));
      }
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace deitfake
