#include "memprobe/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "memprobe/error.hpp"

namespace fs = std::filesystem;

namespace memprobe {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

namespace {

class ByteWriter {
 public:
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

  void expect_magic(const char* magic) {
    const std::size_t n = std::char_traits<char>::length(magic);
    need(n);
    if (data_.compare(pos_, n, magic) != 0) fail("bad magic");
    pos_ += n;
  }
  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(what_ + ": " + msg + " at byte offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated input");
  }
  const std::string& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

std::string encode_tensor(const TensorFile& t) {
  const auto& g = t.geometry;
  if (g.height > 0xffff || g.width > 0xffff || g.channels > 0xffff) throw InvalidArgument("tensor geometry too large");
  ByteWriter w;
  w.bytes("MPRB", 4);
  w.uint<std::uint16_t>(kTensorVersion);
  w.uint<std::uint16_t>(static_cast<std::uint16_t>(g.height));
  w.uint<std::uint16_t>(static_cast<std::uint16_t>(g.width));
  w.uint<std::uint16_t>(static_cast<std::uint16_t>(g.channels));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.images.size()));
  for (const auto& img : t.images) {
    if (img.size() != g.size()) throw DimensionError("tensor image length differs from geometry");
    for (double v : img) w.f64(v);
  }
  return w.take();
}

TensorFile decode_tensor(const std::string& bytes) {
  ByteReader r(bytes, "tensor");
  r.expect_magic("MPRB");
  const auto version = r.uint<std::uint16_t>();
  if (version != kTensorVersion) r.fail("unsupported version " + std::to_string(version));
  TensorFile t;
  t.geometry.height = r.uint<std::uint16_t>();
  t.geometry.width = r.uint<std::uint16_t>();
  t.geometry.channels = r.uint<std::uint16_t>();
  const auto count = r.uint<std::uint32_t>();
  if (t.geometry.size() == 0) r.fail("empty geometry");
  t.images.resize(count);
  for (auto& img : t.images) {
    img.resize(t.geometry.size());
    for (auto& v : img) v = r.f64();
  }
  if (!r.done()) r.fail("trailing data");
  return t;
}

void write_tensor(const fs::path& path, const TensorFile& tensor) { write_file(path, encode_tensor(tensor)); }
TensorFile read_tensor(const fs::path& path) { return decode_tensor(read_file(path)); }

// ---------------------------------------------------------------------------
// PNM

PnmImage decode_pnm(const std::string& bytes) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw ParseError("pnm: " + msg + " at byte offset " + std::to_string(pos));
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) fail("expected a number");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > 1u << 20) fail("number out of range");
      ++pos;
    }
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) fail("not a binary PGM/PPM");
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  PnmImage img;
  img.geometry.width = read_uint();
  img.geometry.height = read_uint();
  img.geometry.channels = channels;
  const std::size_t maxval = read_uint();
  if (img.geometry.size() == 0) fail("empty image");
  if (maxval == 0 || maxval > 65535) fail("maxval out of range");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) fail("missing separator");
  ++pos;

  const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
  const std::size_t n = img.geometry.size();
  if (bytes.size() - pos < n * sample_bytes) fail("truncated pixel data");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t v = static_cast<unsigned char>(bytes[pos]);
    if (sample_bytes == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos + 1]);
    if (v > maxval) fail("sample exceeds maxval");
    img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
    pos += sample_bytes;
  }
  return img;
}

PnmImage read_pnm(const fs::path& path) { return decode_pnm(read_file(path)); }

std::string encode_pnm(const ImageGeometry& g, std::span<const double> pixels) {
  if (g.channels != 1 && g.channels != 3) throw InvalidArgument("pnm supports 1 or 3 channels");
  if (pixels.size() != g.size()) throw DimensionError("pnm: pixel count differs from geometry");
  std::string out = (g.channels == 1 ? "P5\n" : "P6\n") + std::to_string(g.width) + " " + std::to_string(g.height) +
                    "\n255\n";
  for (double v : pixels) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

void write_pnm(const fs::path& path, const ImageGeometry& g, std::span<const double> pixels) {
  write_file(path, encode_pnm(g, pixels));
}

// ---------------------------------------------------------------------------
// Model

std::string encode_model(const Model& model) {
  struct LayerView {
    const Matrix* weight;
    const Vector* bias;
    std::optional<Activation> activation;
  };
  std::vector<LayerView> views;
  const bool tied = std::holds_alternative<TiedAutoencoder>(model);
  static const Vector kNoBias;
  if (tied) {
    const auto& t = std::get<TiedAutoencoder>(model);
    views.push_back({&t.weight, &kNoBias, t.activation});
  } else {
    for (const auto& l : std::get<AutoencoderModel>(model).layers()) views.push_back({&l.weight, &l.bias, l.activation});
  }

  ByteWriter w;
  w.bytes("MPMD", 4);
  w.uint<std::uint32_t>(kModelVersion);
  w.uint<std::uint8_t>(tied ? 1 : 0);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(views.size()));
  for (const auto& v : views) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(v.weight->cols()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(v.weight->rows()));
    w.uint<std::uint8_t>(v.bias->empty() ? 0 : 1);
    w.uint<std::uint8_t>(v.activation ? 1 : 0);
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(v.activation ? v.activation->kind : ActivationKind::Identity));
    w.f64(v.activation ? v.activation->param : 0.0);
  }
  for (const auto& v : views) {
    for (double x : v.weight->data()) w.f64(x);
    for (double x : *v.bias) w.f64(x);
  }
  return w.take();
}

Model decode_model(const std::string& bytes) {
  ByteReader r(bytes, "model");
  r.expect_magic("MPMD");
  const auto version = r.uint<std::uint32_t>();
  if (version != kModelVersion) r.fail("unsupported model version " + std::to_string(version));
  const auto tied = r.uint<std::uint8_t>();
  if (tied > 1) r.fail("bad tied flag");
  const auto count = r.uint<std::uint32_t>();
  if (count == 0 || count > 4096) r.fail("bad layer count");
  if (tied && count != 1) r.fail("tied model must have exactly one layer");

  struct Header {
    std::uint32_t in, out;
    bool bias;
    std::optional<Activation> activation;
  };
  std::vector<Header> headers;
  for (std::uint32_t i = 0; i < count; ++i) {
    Header h;
    h.in = r.uint<std::uint32_t>();
    h.out = r.uint<std::uint32_t>();
    const auto has_bias = r.uint<std::uint8_t>();
    const auto has_act = r.uint<std::uint8_t>();
    const auto kind = r.uint<std::uint8_t>();
    const double param = r.f64();
    if (has_bias > 1 || has_act > 1 || kind > 3) r.fail("bad layer header");
    if (h.in == 0 || h.out == 0 || static_cast<std::uint64_t>(h.in) * h.out > (1ULL << 28)) r.fail("bad layer width");
    h.bias = has_bias == 1;
    if (has_act) h.activation = Activation{static_cast<ActivationKind>(kind), param};
    headers.push_back(h);
  }

  std::vector<DenseLayer> layers;
  for (const auto& h : headers) {
    DenseLayer l{Matrix(h.out, h.in), {}, h.activation};
    for (auto& x : l.weight.data()) x = r.f64();
    if (h.bias) {
      l.bias.resize(h.out);
      for (auto& x : l.bias) x = r.f64();
    }
    layers.push_back(std::move(l));
  }
  if (!r.done()) r.fail("trailing data");

  if (tied) {
    if (headers[0].bias || !headers[0].activation) r.fail("tied model layer must have an activation and no bias");
    return TiedAutoencoder{std::move(layers[0].weight), *layers[0].activation};
  }
  try {
    return AutoencoderModel(std::move(layers));
  } catch (const Error& e) {
    throw ParseError(std::string("model: inconsistent layers: ") + e.what());
  }
}

void save_model(const fs::path& path, const Model& model) { write_file(path, encode_model(model)); }
Model load_model(const fs::path& path) { return decode_model(read_file(path)); }

// ---------------------------------------------------------------------------
// Mask

std::string encode_mask(const ErasureMask& mask, const std::optional<ImageGeometry>& geometry) {
  std::string out;
  if (geometry) {
    const auto& g = *geometry;
    if (g.size() != mask.size()) throw DimensionError("mask length differs from geometry");
    out = "P1\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n";
    for (std::size_t r = 0; r < g.height; ++r) {
      for (std::size_t c = 0; c < g.width; ++c) {
        if (c) out.push_back(' ');
        out.push_back(mask[(r * g.width + c) * g.channels] ? '1' : '0');
      }
      out.push_back('\n');
    }
    return out;
  }
  out = std::to_string(mask.size()) + "\n";
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out.push_back(mask[i] ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

ErasureMask decode_mask(const std::string& text, std::size_t channels) {
  if (channels == 0) throw InvalidArgument("mask channels must be positive");
  std::size_t pos = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw ParseError("mask: " + msg + " at byte offset " + std::to_string(pos));
  };
  auto next_token = [&]() -> std::string {
    while (pos < text.size()) {
      if (text[pos] == '#') {
        while (pos < text.size() && text[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(text[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    return text.substr(start, pos - start);
  };
  auto to_size = [&](const std::string& tok) -> std::size_t {
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      fail("expected a number");
    }
    if (tok.size() > 9) fail("number out of range");
    return std::stoul(tok);
  };

  std::size_t pixels;
  bool pbm = false;
  std::string first = next_token();
  if (first == "P1") {
    pbm = true;
    const std::size_t w = to_size(next_token());
    const std::size_t h = to_size(next_token());
    pixels = w * h;
  } else {
    pixels = to_size(first);
  }
  if (pixels == 0) fail("empty mask");

  std::vector<std::uint8_t> pixel;
  pixel.reserve(pixels);
  while (pixel.size() < pixels) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos >= text.size()) fail("truncated mask data");
    const char c = text[pos];
    if (c != '0' && c != '1') fail("mask entries must be 0 or 1");
    pixel.push_back(c == '1' ? 1 : 0);
    ++pos;
  }
  if (!next_token().empty()) fail("trailing data");

  const std::size_t reps = pbm ? channels : 1;
  std::vector<std::uint8_t> diag(pixels * reps);
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t c = 0; c < reps; ++c) diag[p * reps + c] = pixel[p];
  return ErasureMask(std::move(diag));
}

void write_mask(const fs::path& path, const ErasureMask& mask, const std::optional<ImageGeometry>& geometry) {
  write_file(path, encode_mask(mask, geometry));
}

ErasureMask read_mask(const fs::path& path, std::size_t channels) { return decode_mask(read_file(path), channels); }

// ---------------------------------------------------------------------------
// Dataset

std::vector<ImageRecord> load_dataset(const fs::path& dir, const std::optional<ImageGeometry>& geometry,
                                      std::size_t limit, std::uint64_t seed) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".mprb" || ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<ImageRecord> records;
  for (const auto& file : files) {
    const auto stem = file.stem().string();
    if (file.extension() == ".mprb") {
      auto t = read_tensor(file);
      for (std::size_t i = 0; i < t.images.size(); ++i) {
        const std::string id = t.images.size() == 1 ? stem : stem + ":" + std::to_string(i);
        records.push_back({id, std::move(t.images[i]), t.geometry});
      }
    } else {
      auto img = read_pnm(file);
      records.push_back({stem, std::move(img.pixels), img.geometry});
    }
  }
  if (records.empty()) throw IoError("dataset directory '" + dir.string() + "' contains no images");

  for (auto& rec : records) {
    if (geometry && rec.geometry != *geometry) {
      throw DimensionError("image '" + rec.sample_id + "' has geometry " + std::to_string(rec.geometry.height) + "x" +
                           std::to_string(rec.geometry.width) + "x" + std::to_string(rec.geometry.channels));
    }
    const auto [lo, hi] = std::minmax_element(rec.pixels.begin(), rec.pixels.end());
    if (*lo < 0.0 || *hi > 1.0) {
      const double base = *lo;
      const double span = *hi - *lo;
      for (auto& v : rec.pixels) v = (v - base) / span;
    }
    if (!all_finite(rec.pixels)) throw ParseError("image '" + rec.sample_id + "' has non-finite values");
  }
  if (!geometry) {
    for (const auto& rec : records) {
      if (rec.geometry != records.front().geometry) throw DimensionError("dataset images have different geometries");
    }
  }

  if (limit > 0 && limit < records.size()) {
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    std::vector<ImageRecord> subset;
    for (auto i : idx) subset.push_back(std::move(records[i]));
    records = std::move(subset);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Config

ConfigMap parse_config(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("config line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigMap read_config(const fs::path& path) { return parse_config(read_file(path)); }

}  // namespace memprobe
