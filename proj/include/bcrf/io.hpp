#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bcrf/core_types.hpp"
#include "bcrf/inference.hpp"
#include "bcrf/panoptic.hpp"

namespace bcrf::io {

using nlohmann::json;

// ------------------------------------------------------------------ BTF1
//
// "BTF1", u32 dtype, u32 rank, rank x u32 dims, row-major payload; all
// little-endian. dtype 0 = f32, 1 = i32, 2 = f64.

enum class Dtype : std::uint32_t { f32 = 0, i32 = 1, f64 = 2 };

inline std::size_t dtype_size(Dtype d) { return d == Dtype::f64 ? 8 : 4; }

struct Tensor {
  Dtype dtype = Dtype::f32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;
  std::vector<std::int32_t> i32;
  std::vector<double> f64;

  std::size_t elements() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  double value(std::size_t k) const {
    switch (dtype) {
      case Dtype::f32: return f32[k];
      case Dtype::i32: return i32[k];
      default: return f64[k];
    }
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}
inline std::uint64_t get_u64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get_u32(p)) | static_cast<std::uint64_t>(get_u32(p + 4)) << 32;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw input_error("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw input_error("write failed for '" + path + "'");
}

}  // namespace detail

inline std::string encode_btf(const Tensor& t) {
  if (t.elements() != (t.dtype == Dtype::f32 ? t.f32.size() : t.dtype == Dtype::i32 ? t.i32.size() : t.f64.size()))
    throw input_error("tensor payload does not match its dims");
  std::string out = "BTF1";
  detail::put_u32(out, static_cast<std::uint32_t>(t.dtype));
  detail::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) detail::put_u32(out, d);
  out.reserve(out.size() + t.elements() * dtype_size(t.dtype));
  switch (t.dtype) {
    case Dtype::f32:
      for (float v : t.f32) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        detail::put_u32(out, bits);
      }
      break;
    case Dtype::i32:
      for (std::int32_t v : t.i32) detail::put_u32(out, static_cast<std::uint32_t>(v));
      break;
    case Dtype::f64:
      for (double v : t.f64) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        detail::put_u64(out, bits);
      }
      break;
  }
  return out;
}

inline Tensor decode_btf(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12) throw input_error("BTF1: file too short for header");
  if (bytes.compare(0, 4, "BTF1") != 0) throw input_error("BTF1: bad magic '" + bytes.substr(0, 4) + "'");
  Tensor t;
  const std::uint32_t dt = detail::get_u32(p + 4);
  if (dt > 2) throw input_error("BTF1: unknown dtype " + std::to_string(dt));
  t.dtype = static_cast<Dtype>(dt);
  const std::uint32_t rank = detail::get_u32(p + 8);
  if (bytes.size() < 12 + 4ull * rank) throw input_error("BTF1: truncated header");
  for (std::uint32_t k = 0; k < rank; ++k) t.dims.push_back(detail::get_u32(p + 12 + 4 * k));
  const std::size_t off = 12 + 4ull * rank;
  const std::size_t n = t.elements();
  const std::size_t want = n * dtype_size(t.dtype);
  if (bytes.size() - off != want)
    throw input_error("BTF1: payload has " + std::to_string(bytes.size() - off) + " bytes, dims require " +
                      std::to_string(want) + " (truncated or padded)");
  const unsigned char* q = p + off;
  switch (t.dtype) {
    case Dtype::f32:
      t.f32.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        const std::uint32_t bits = detail::get_u32(q + 4 * k);
        std::memcpy(&t.f32[k], &bits, 4);
      }
      break;
    case Dtype::i32:
      t.i32.resize(n);
      for (std::size_t k = 0; k < n; ++k) t.i32[k] = static_cast<std::int32_t>(detail::get_u32(q + 4 * k));
      break;
    case Dtype::f64:
      t.f64.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t bits = detail::get_u64(q + 8 * k);
        std::memcpy(&t.f64[k], &bits, 8);
      }
      break;
  }
  return t;
}

inline Tensor read_btf(const std::string& path) {
  try {
    return decode_btf(detail::read_file(path));
  } catch (const input_error& e) {
    throw input_error(path + ": " + e.what());
  }
}
inline void write_btf(const std::string& path, const Tensor& t) { detail::write_file(path, encode_btf(t)); }

inline Tensor field_to_tensor(const Field& f, Dtype dtype = Dtype::f32) {
  Tensor t;
  t.dtype = dtype;
  t.dims = {static_cast<std::uint32_t>(f.height), static_cast<std::uint32_t>(f.width),
            static_cast<std::uint32_t>(f.channels)};
  if (dtype == Dtype::f32)
    t.f32.assign(f.data.begin(), f.data.end());
  else if (dtype == Dtype::f64)
    t.f64 = f.data;
  else
    for (double v : f.data) t.i32.push_back(static_cast<std::int32_t>(v));
  return t;
}

// Rank-3 [H, W, C] tensors map directly; rank-2 [H, W] becomes C = 1.
inline Field tensor_to_field(const Tensor& t) {
  if (t.dims.size() != 2 && t.dims.size() != 3) throw input_error("expected a rank-2 or rank-3 tensor");
  const int c = t.dims.size() == 3 ? static_cast<int>(t.dims[2]) : 1;
  Field f(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), c);
  for (std::size_t k = 0; k < f.data.size(); ++k) f.data[k] = t.value(k);
  if (!f.all_finite()) throw input_error("tensor contains non-finite values");
  return f;
}

inline Tensor labeling_to_tensor(const Labeling& l, int height, int width) {
  Tensor t;
  t.dtype = Dtype::i32;
  t.dims = {static_cast<std::uint32_t>(height), static_cast<std::uint32_t>(width)};
  t.i32.assign(l.begin(), l.end());
  return t;
}

inline Labeling tensor_to_labeling(const Tensor& t, int& height, int& width) {
  if (t.dtype != Dtype::i32) throw input_error("labeling tensor must have dtype i32");
  if (t.dims.size() != 2) throw input_error("labeling tensor must be rank 2 [H, W]");
  height = static_cast<int>(t.dims[0]);
  width = static_cast<int>(t.dims[1]);
  return Labeling(t.i32.begin(), t.i32.end());
}

inline void write_panoptic(const std::string& semantic_path, const std::string& instance_path,
                           const PanopticMap& map) {
  write_btf(semantic_path, labeling_to_tensor(map.semantic, map.height, map.width));
  write_btf(instance_path, labeling_to_tensor(map.instance, map.height, map.width));
}

inline PanopticMap read_panoptic(const std::string& semantic_path, const std::string& instance_path) {
  PanopticMap m;
  int h2 = 0, w2 = 0;
  m.semantic = tensor_to_labeling(read_btf(semantic_path), m.height, m.width);
  m.instance = tensor_to_labeling(read_btf(instance_path), h2, w2);
  if (h2 != m.height || w2 != m.width) throw input_error("semantic and instance maps differ in shape");
  return m;
}

// ------------------------------------------------------------------- PPM

inline Field decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])) && bytes[pos] != '#')
      tok.push_back(bytes[pos++]);
    if (tok.empty()) throw input_error("PPM: truncated header");
    return tok;
  };
  if (next_token() != "P6") throw input_error("PPM: only binary P6 images are supported");
  auto number = [&]() {
    const std::string tok = next_token();
    if (tok.find_first_not_of("0123456789") != std::string::npos)
      throw input_error("PPM: bad header field '" + tok + "'");
    return std::stoi(tok);
  };
  const int w = number(), h = number(), maxval = number();
  if (w <= 0 || h <= 0) throw input_error("PPM: dimensions must be positive");
  if (maxval != 255) throw input_error("PPM: only maxval 255 is supported");
  ++pos;  // single whitespace byte before the raster
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() < pos || bytes.size() - pos != need) throw input_error("PPM: raster size mismatch");
  Field img(h, w, 3);
  for (std::size_t k = 0; k < need; ++k) img.data[k] = static_cast<unsigned char>(bytes[pos + k]);
  return img;
}

inline std::string encode_ppm(const Field& img) {
  if (img.channels != 3) throw input_error("PPM: image needs 3 channels");
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (double v : img.data) {
    const double c = std::min(255.0, std::max(0.0, std::round(v)));
    out.push_back(static_cast<char>(static_cast<unsigned char>(c)));
  }
  return out;
}

inline Field read_ppm(const std::string& path) {
  try {
    return decode_ppm(detail::read_file(path));
  } catch (const input_error& e) {
    throw input_error(path + ": " + e.what());
  }
}
inline void write_ppm(const std::string& path, const Field& img) { detail::write_file(path, encode_ppm(img)); }

// PPM or BTF1 ([H, W, 3]) by magic.
inline Field read_image(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.compare(0, 4, "BTF1") == 0) {
    Field f = tensor_to_field(decode_btf(bytes));
    if (f.channels != 3) throw input_error(path + ": image tensor must be [H, W, 3]");
    return f;
  }
  try {
    return decode_ppm(bytes);
  } catch (const input_error& e) {
    throw input_error(path + ": " + e.what());
  }
}

// Deterministic color per panoptic segment.
inline Field panoptic_preview(const PanopticMap& map) {
  Field img(map.height, map.width, 3);
  for (std::size_t i = 0; i < map.semantic.size(); ++i) {
    std::uint32_t h = static_cast<std::uint32_t>(map.semantic[i] + 1) * 2654435761u ^
                      static_cast<std::uint32_t>(map.instance[i]) * 40503u * 97u;
    h ^= h >> 13;
    h *= 0x5bd1e995u;
    h ^= h >> 15;
    for (int c = 0; c < 3; ++c) img.at(static_cast<int>(i), c) = 64 + ((h >> (8 * c)) & 0xFFu) % 192;
  }
  return img;
}

// ------------------------------------------------------------------- RLE
//
// Alternating run lengths over the row-major mask, starting with a run of
// zeros (possibly empty).

inline std::vector<int> rle_encode(const std::vector<std::uint8_t>& mask) {
  std::vector<int> runs;
  std::uint8_t cur = 0;
  int len = 0;
  for (std::uint8_t v : mask) {
    const std::uint8_t b = v ? 1 : 0;
    if (b != cur) {
      runs.push_back(len);
      cur = b;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

inline std::vector<std::uint8_t> rle_decode(const std::vector<int>& runs, std::size_t pixels) {
  std::vector<std::uint8_t> mask;
  mask.reserve(pixels);
  std::uint8_t cur = 0;
  for (int r : runs) {
    if (r < 0) throw input_error("RLE: negative run length");
    if (mask.size() + static_cast<std::size_t>(r) > pixels) throw input_error("RLE: runs exceed image size");
    mask.insert(mask.end(), static_cast<std::size_t>(r), cur);
    cur ^= 1;
  }
  if (mask.size() != pixels)
    throw input_error("RLE: runs cover " + std::to_string(mask.size()) + " of " + std::to_string(pixels) + " pixels");
  return mask;
}

// ------------------------------------------------------------ detections

inline std::vector<Detection> parse_detections(const json& doc, int height, int width) {
  if (!doc.is_array()) throw input_error("detections: top level must be an array");
  std::vector<Detection> out;
  const std::size_t pixels = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const json& d = doc[k];
    const std::string where = "detections[" + std::to_string(k) + "]: ";
    if (!d.is_object()) throw input_error(where + "must be an object");
    for (const auto& [key, v] : d.items())
      if (key != "class" && key != "score" && key != "rle") throw input_error(where + "unknown key '" + key + "'");
    if (!d.contains("class") || !d["class"].is_number_integer()) throw input_error(where + "needs integer 'class'");
    if (!d.contains("score") || !d["score"].is_number()) throw input_error(where + "needs numeric 'score'");
    if (!d.contains("rle") || !d["rle"].is_array()) throw input_error(where + "needs array 'rle'");
    Detection det;
    det.class_id = d["class"].get<int>();
    det.score = d["score"].get<double>();
    std::vector<int> runs;
    for (const auto& r : d["rle"]) {
      if (!r.is_number_integer()) throw input_error(where + "rle entries must be integers");
      runs.push_back(r.get<int>());
    }
    try {
      det.mask = rle_decode(runs, pixels);
    } catch (const input_error& e) {
      throw input_error(where + e.what());
    }
    out.push_back(std::move(det));
  }
  return out;
}

inline json detections_to_json(const std::vector<Detection>& dets) {
  json doc = json::array();
  for (const auto& d : dets) doc.push_back({{"class", d.class_id}, {"score", d.score}, {"rle", rle_encode(d.mask)}});
  return doc;
}

inline json read_json(const std::string& path) {
  const std::string text = detail::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw input_error(path + ": invalid JSON: " + e.what());
  }
}

inline void write_json(const std::string& path, const json& doc) { detail::write_file(path, doc.dump(2) + "\n"); }

inline std::vector<Detection> read_detections(const std::string& path, int height, int width) {
  return parse_detections(read_json(path), height, width);
}

// ---------------------------------------------------------------- config

struct Config {
  LabelSchema schema;
  BcrfParams params;
};

namespace detail {

inline void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw input_error("config: unknown key '" + where + key + "'");
  }
}

inline std::vector<int> int_list(const json& j, const std::string& what) {
  if (!j.is_array()) throw input_error("config: '" + what + "' must be an array of integers");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw input_error("config: '" + what + "' must be an array of integers");
    out.push_back(v.get<int>());
  }
  return out;
}

inline Matrix parse_matrix(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw input_error("config: '" + what + "' must be a non-empty array of rows");
  Matrix m(static_cast<int>(j.size()), static_cast<int>(j[0].size()));
  for (int r = 0; r < m.rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<int>(row.size()) != m.cols)
      throw input_error("config: '" + what + "' rows must have equal length");
    for (int c = 0; c < m.cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) throw input_error("config: '" + what + "' entries must be numbers");
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

inline std::vector<std::vector<double>> matrix_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows));
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) rows[static_cast<std::size_t>(r)].push_back(m(r, c));
  return rows;
}

inline KernelSpec parse_kernel(const json& j, const std::string& what) {
  if (!j.is_array()) throw input_error("config: kernel '" + what + "' must be an array of components");
  KernelSpec spec;
  for (const auto& c : j) {
    if (!c.is_object()) throw input_error("config: kernel '" + what + "' components must be objects");
    reject_unknown(c, {"kind", "weight", "bandwidths"}, "kernels." + what + "[].");
    KernelComponent comp;
    const std::string kind = c.value("kind", std::string("spatial"));
    if (kind == "spatial")
      comp.kind = FeatureKind::spatial;
    else if (kind == "bilateral")
      comp.kind = FeatureKind::bilateral;
    else
      throw input_error("config: kernel kind must be 'spatial' or 'bilateral', got '" + kind + "'");
    if (c.contains("weight")) {
      if (!c["weight"].is_number()) throw input_error("config: kernel weight must be a number");
      comp.weight = c["weight"].get<double>();
    }
    if (!c.contains("bandwidths") || !c["bandwidths"].is_array())
      throw input_error("config: kernel '" + what + "' component needs 'bandwidths'");
    for (const auto& b : c["bandwidths"]) {
      if (!b.is_number()) throw input_error("config: bandwidths must be numbers");
      comp.bandwidths.push_back(b.get<double>());
    }
    spec.components.push_back(std::move(comp));
  }
  return spec;
}

inline json kernel_to_json(const KernelSpec& k) {
  json arr = json::array();
  for (const auto& c : k.components)
    arr.push_back({{"kind", c.kind == FeatureKind::spatial ? "spatial" : "bilateral"},
                   {"weight", c.weight},
                   {"bandwidths", c.bandwidths}});
  return arr;
}

}  // namespace detail

/// Parses a config document. Everything except "schema" is optional; the
/// defaults are unit term weights, Potts mu/eta with cost `compat_init`
/// (1 by default), 5 iterations and no damping.
inline Config parse_config(const json& doc) {
  if (!doc.is_object()) throw input_error("config: top level must be an object");
  detail::reject_unknown(doc, {"schema", "weights", "kernels", "compat_init", "mu", "eta", "iterations", "damping",
                               "convergence_tol"},
                         "");
  if (!doc.contains("schema")) throw input_error("config: missing 'schema'");
  const json& js = doc["schema"];
  if (!js.is_object()) throw input_error("config: 'schema' must be an object");
  detail::reject_unknown(js, {"labels", "stuff", "things", "instance_classes"}, "schema.");
  Config cfg;
  if (!js.contains("labels") || !js["labels"].is_array()) throw input_error("config: schema.labels must be an array");
  for (const auto& n : js["labels"]) {
    if (!n.is_string()) throw input_error("config: schema.labels entries must be strings");
    cfg.schema.label_names.push_back(n.get<std::string>());
  }
  cfg.schema.stuff = detail::int_list(js.value("stuff", json::array()), "schema.stuff");
  cfg.schema.things = detail::int_list(js.value("things", json::array()), "schema.things");
  if (js.contains("instance_classes"))
    cfg.schema.instance_class = detail::int_list(js["instance_classes"], "schema.instance_classes");
  validate_schema(cfg.schema);

  BcrfParams& p = cfg.params;
  p = default_params(cfg.schema);
  if (doc.contains("weights")) {
    const json& jw = doc["weights"];
    if (!jw.is_object()) throw input_error("config: 'weights' must be an object");
    for (const auto& [key, v] : jw.items()) {
      int found = -1;
      for (int t = 0; t < kNumTerms; ++t)
        if (key == kTermNames[static_cast<std::size_t>(t)]) found = t;
      if (found < 0) throw input_error("config: unknown key 'weights." + key + "'");
      if (!v.is_number()) throw input_error("config: weights." + key + " must be a number");
      p.weights[static_cast<std::size_t>(found)] = v.get<double>();
    }
  }
  if (doc.contains("kernels")) {
    const json& jk = doc["kernels"];
    if (!jk.is_object()) throw input_error("config: 'kernels' must be an object");
    detail::reject_unknown(jk, {"semantic", "instance", "cross"}, "kernels.");
    if (jk.contains("semantic")) p.kernel_semantic = detail::parse_kernel(jk["semantic"], "semantic");
    if (jk.contains("instance")) p.kernel_instance = detail::parse_kernel(jk["instance"], "instance");
    if (jk.contains("cross")) p.kernel_cross = detail::parse_kernel(jk["cross"], "cross");
  }
  if (doc.contains("compat_init")) {
    if (!doc["compat_init"].is_number()) throw input_error("config: compat_init must be a number");
    const double c = doc["compat_init"].get<double>();
    p.mu = Matrix::potts(cfg.schema.num_labels(), c);
    p.eta = Matrix::potts(cfg.schema.eta_size(), c);
  }
  if (doc.contains("mu")) p.mu = detail::parse_matrix(doc["mu"], "mu");
  if (doc.contains("eta")) p.eta = detail::parse_matrix(doc["eta"], "eta");
  if (doc.contains("iterations")) {
    if (!doc["iterations"].is_number_integer()) throw input_error("config: iterations must be an integer");
    p.iterations = doc["iterations"].get<int>();
  }
  if (doc.contains("damping")) {
    if (!doc["damping"].is_number()) throw input_error("config: damping must be a number");
    p.damping = doc["damping"].get<double>();
  }
  if (doc.contains("convergence_tol")) {
    if (!doc["convergence_tol"].is_number()) throw input_error("config: convergence_tol must be a number");
    p.convergence_tol = doc["convergence_tol"].get<double>();
  }
  validate_params(p, cfg.schema);
  return cfg;
}

inline Config load_config(const std::string& path) {
  try {
    return parse_config(read_json(path));
  } catch (const input_error& e) {
    throw input_error(path + ": " + e.what());
  }
}

inline json config_to_json(const LabelSchema& schema, const BcrfParams& p) {
  json weights = json::object();
  for (int t = 0; t < kNumTerms; ++t) weights[kTermNames[static_cast<std::size_t>(t)]] = p.weights[static_cast<std::size_t>(t)];
  json js = {{"labels", schema.label_names}, {"stuff", schema.stuff}, {"things", schema.things}};
  if (!schema.instance_class.empty()) js["instance_classes"] = schema.instance_class;
  return {{"schema", js},
          {"weights", weights},
          {"kernels",
           {{"semantic", detail::kernel_to_json(p.kernel_semantic)},
            {"instance", detail::kernel_to_json(p.kernel_instance)},
            {"cross", detail::kernel_to_json(p.kernel_cross)}}},
          {"mu", detail::matrix_rows(p.mu)},
          {"eta", detail::matrix_rows(p.eta)},
          {"iterations", p.iterations},
          {"damping", p.damping},
          {"convergence_tol", p.convergence_tol}};
}

// ------------------------------------------------------------------- CSV

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k) out += ',';
        out += cells[k];
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

inline Csv parse_csv(const std::string& text) {
  Csv csv;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first) {
      csv.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != csv.header.size()) throw input_error("CSV: row has " + std::to_string(cells.size()) +
                                                               " cells, header has " + std::to_string(csv.header.size()));
      csv.rows.push_back(std::move(cells));
    }
  }
  if (first) throw input_error("CSV: empty document");
  return csv;
}

inline Csv read_csv(const std::string& path) { return parse_csv(detail::read_file(path)); }
inline void write_csv(const std::string& path, const Csv& csv) { detail::write_file(path, csv.str()); }

inline Csv trace_csv(const InferenceTrace& trace) {
  Csv csv{{"iter", "free_energy", "max_delta"}, {}};
  for (const auto& r : trace.records)
    csv.rows.push_back({std::to_string(r.iteration), format_real(r.free_energy), format_real(r.max_delta)});
  return csv;
}

inline Csv fit_csv(const std::vector<double>& losses) {
  Csv csv{{"step", "loss"}, {}};
  for (std::size_t k = 0; k < losses.size(); ++k) csv.rows.push_back({std::to_string(k), format_real(losses[k])});
  return csv;
}

// eta heatmap with class names on both axes; null first.
inline Csv eta_csv(const LabelSchema& schema, const Matrix& eta) {
  std::vector<std::string> names{"null"};
  for (int l : schema.things) names.push_back(schema.label_names[static_cast<std::size_t>(l)]);
  Csv csv;
  csv.header.push_back("class");
  csv.header.insert(csv.header.end(), names.begin(), names.end());
  for (int r = 0; r < eta.rows; ++r) {
    std::vector<std::string> row{names[static_cast<std::size_t>(r)]};
    for (int c = 0; c < eta.cols; ++c) row.push_back(format_real(eta(r, c)));
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

}  // namespace bcrf::io
