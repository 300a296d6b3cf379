#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "egfr/chart.hpp"
#include "egfr/errors.hpp"

namespace egfr {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

uint32_t get_u32(const uint8_t* p) {
  return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | p[3];
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& data) {
  put_u32(out, uint32_t(data.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uint32_t crc = crc32(0, out.data() + crc_start, uInt(out.size() - crc_start));
  put_u32(out, crc);
}

const uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

}  // namespace

std::vector<uint8_t> encode_png(const Image& img) {
  if (img.width <= 0 || img.height <= 0)
    throw RenderError("cannot encode empty image");

  // filter byte 0 per scanline
  std::vector<uint8_t> raw;
  raw.reserve(size_t(img.height) * (1 + size_t(img.width) * 3));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    const uint8_t* row = img.rgb.data() + size_t(y) * img.width * 3;
    raw.insert(raw.end(), row, row + size_t(img.width) * 3);
  }

  uLongf comp_cap = compressBound(uLong(raw.size()));
  std::vector<uint8_t> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw IoError("zlib compression failed");
  comp.resize(comp_cap);

  std::vector<uint8_t> out(kSig, kSig + 8);
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, uint32_t(img.width));
  put_u32(ihdr, uint32_t(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", {});
  return out;
}

Image decode_png(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSig, 8) != 0)
    throw IoError("not a PNG file");

  Image img;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    uint32_t len = get_u32(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) throw IoError("truncated PNG chunk");
    std::string type(reinterpret_cast<const char*>(bytes.data() + pos + 4), 4);
    const uint8_t* data = bytes.data() + pos + 8;
    if (type == "IHDR") {
      img.width = int(get_u32(data));
      img.height = int(get_u32(data + 4));
      if (data[8] != 8 || data[9] != 2 || data[12] != 0)
        throw IoError("unsupported PNG format (expect 8-bit RGB, no interlace)");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (img.width <= 0 || img.height <= 0) throw IoError("PNG missing IHDR");

  size_t stride = size_t(img.width) * 3;
  std::vector<uint8_t> raw(size_t(img.height) * (stride + 1));
  uLongf raw_len = uLongf(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw IoError("PNG inflate failed");

  img.rgb.resize(size_t(img.height) * stride);
  for (int y = 0; y < img.height; ++y) {
    const uint8_t* line = raw.data() + size_t(y) * (stride + 1);
    uint8_t* out = img.rgb.data() + size_t(y) * stride;
    uint8_t filter = line[0];
    const uint8_t* prev = y > 0 ? img.rgb.data() + size_t(y - 1) * stride : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      int x = line[1 + i];
      int a = i >= 3 ? out[i - 3] : 0;
      int b = prev ? prev[i] : 0;
      int c = (prev && i >= 3) ? prev[i - 3] : 0;
      switch (filter) {
        case 0: out[i] = uint8_t(x); break;
        case 1: out[i] = uint8_t(x + a); break;
        case 2: out[i] = uint8_t(x + b); break;
        case 3: out[i] = uint8_t(x + (a + b) / 2); break;
        case 4: {
          int p = a + b - c;
          int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          int pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          out[i] = uint8_t(x + pred);
          break;
        }
        default: throw IoError("unsupported PNG filter");
      }
    }
  }
  return img;
}

void write_png(const Image& img, const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::exists(parent))
    throw IoError("directory does not exist: " + parent.string());
  auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

Image read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace egfr
