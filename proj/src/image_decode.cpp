// SPDX-License-Identifier: Apache-2.0
#include "lpn/image.hpp"

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <vector>

#include <jpeglib.h>
#include <png.h>

namespace lpn {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DecodeError("cannot open image: " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Tensor<float> from_bytes(const uint8_t* px, Index h, Index w, Index c) {
  Tensor<float> t(Shape{h, w, c});
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(px[i]);
  return t;
}

// --- PGM (P5) ---------------------------------------------------------------

// Header tokens separated by whitespace; '#' starts a comment to end of line.
size_t pgm_token(const std::vector<uint8_t>& buf, size_t pos, std::string& out) {
  while (pos < buf.size()) {
    if (std::isspace(buf[pos])) {
      ++pos;
    } else if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  out.clear();
  while (pos < buf.size() && !std::isspace(buf[pos])) out.push_back(static_cast<char>(buf[pos++]));
  if (out.empty()) throw DecodeError("pgm: truncated header");
  return pos;
}

long pgm_number(const std::string& tok) {
  if (tok.size() > 9) throw DecodeError("pgm: header number out of range '" + tok + "'");
  for (char ch : tok)
    if (!std::isdigit(static_cast<unsigned char>(ch))) throw DecodeError("pgm: bad header token '" + tok + "'");
  return std::stol(tok);
}

Tensor<float> decode_pgm(const std::vector<uint8_t>& buf, const std::string& path) {
  std::string tok;
  size_t pos = pgm_token(buf, 0, tok);
  if (tok != "P5") throw DecodeError("pgm: expected P5, got '" + tok + "'");
  pos = pgm_token(buf, pos, tok);
  const long w = pgm_number(tok);
  pos = pgm_token(buf, pos, tok);
  const long h = pgm_number(tok);
  pos = pgm_token(buf, pos, tok);
  const long maxval = pgm_number(tok);
  if (w < 1 || h < 1) throw DecodeError("pgm: bad dimensions in " + path);
  if (maxval < 1 || maxval > 255) throw DecodeError("pgm: unsupported maxval " + std::to_string(maxval));
  pos += 1;  // single whitespace byte after maxval
  const size_t need = static_cast<size_t>(w) * static_cast<size_t>(h);
  if (pos + need > buf.size()) throw DecodeError("pgm: truncated pixel data in " + path);
  return from_bytes(buf.data() + pos, h, w, 1);
}

// --- JPEG (libjpeg) ---------------------------------------------------------

struct JpegErrorMgr {
  jpeg_error_mgr base;
  jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  longjmp(err->jump, 1);
}

Tensor<float> decode_jpeg(const std::vector<uint8_t>& buf, const std::string& path) {
  // every non-trivial object is constructed before setjmp so the longjmp
  // return path unwinds them normally
  std::vector<uint8_t> pixels;
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError(std::string("jpeg: ") + err.message + " in " + path);
  }

  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, buf.data(), static_cast<unsigned long>(buf.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);

  const Index h = cinfo.output_height, w = cinfo.output_width, c = cinfo.output_components;
  if (c != 1 && c != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError("jpeg: unsupported channel count " + std::to_string(c) + " in " + path);
  }
  pixels.resize(static_cast<size_t>(h * w * c));
  while (cinfo.output_scanline < cinfo.output_height) {
    uint8_t* row = pixels.data() + static_cast<size_t>(cinfo.output_scanline) * w * c;
    JSAMPROW rows[1] = {row};
    jpeg_read_scanlines(&cinfo, rows, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_bytes(pixels.data(), h, w, c);
}

// --- PNG (libpng simplified API) --------------------------------------------

Tensor<float> decode_png(const std::vector<uint8_t>& buf, const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, buf.data(), buf.size()))
    throw DecodeError(std::string("png: ") + image.message + " in " + path);

  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const Index c = color ? 3 : 1;
  std::vector<uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DecodeError("png: " + msg + " in " + path);
  }
  return from_bytes(pixels.data(), image.height, image.width, c);
}

}  // namespace

Tensor<float> decode_image(const std::string& path) {
  const std::vector<uint8_t> buf = read_file(path);
  if (buf.size() >= 2 && buf[0] == 0xFF && buf[1] == 0xD8) return decode_jpeg(buf, path);
  if (buf.size() >= 8 && buf[0] == 0x89 && buf[1] == 'P' && buf[2] == 'N' && buf[3] == 'G')
    return decode_png(buf, path);
  if (buf.size() >= 2 && buf[0] == 'P' && buf[1] == '5') return decode_pgm(buf, path);
  throw DecodeError("unknown image format (not JPEG/PNG/PGM): " + path);
}

}  // namespace lpn
