#include "uvtex/image.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "uvtex/errors.hpp"

namespace uvtex {

namespace {

// Skips whitespace and '#' comment lines, then reads one header token.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  return tok;
}

int parse_int(const std::string& tok, const std::string& path, const char* what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("ppm: bad " + std::string(what) + " in " + path);
  }
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("ppm: cannot open " + path);
  if (next_token(in) != "P6") throw ConfigError("ppm: not a P6 file: " + path);
  const int w = parse_int(next_token(in), path, "width");
  const int h = parse_int(next_token(in), path, "height");
  const int maxval = parse_int(next_token(in), path, "maxval");
  if (w < 1 || h < 1) throw ConfigError("ppm: bad dimensions in " + path);
  if (maxval != 255) throw ConfigError("ppm: unsupported maxval in " + path);
  // The header tokenizer consumed the single whitespace after maxval.
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  std::vector<std::uint8_t> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw ConfigError("ppm: truncated payload in " + path);
  Image img(w, h);
  for (std::size_t i = 0; i < n; ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void write_ppm(const Image& img, const std::string& path) {
  if (img.width < 1 || img.height < 1) throw ConfigError("ppm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("ppm: cannot write " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  const auto bytes = image_to_rgb8(img);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("ppm: write failed for " + path);
}

std::vector<std::uint8_t> image_to_rgb8(const Image& img) {
  std::vector<std::uint8_t> bytes(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double q = std::round(img.data[i] * 255.0);
    bytes[i] = static_cast<std::uint8_t>(q < 0.0 ? 0.0 : (q > 255.0 ? 255.0 : q));
  }
  return bytes;
}

Image image_from_rgb8(int width, int height, const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() != static_cast<std::size_t>(width) * height * 3)
    throw ConfigError("rgb8 buffer size does not match dimensions");
  Image img(width, height);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

}  // namespace uvtex
