#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "layout360/core.hpp"
#include "layout360/ssl.hpp"

// File formats: 8-bit RGB PNG panoramas, JSON corner annotations, and the
// versioned binary checkpoint container (see docs/checkpoint_format.md).

namespace layout360 {

class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline void save_png(const std::filesystem::path& path, const Panorama& p) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng failure writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, p.width, p.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(size_t(p.width) * 3);
  for (int i = 0; i < p.height; ++i) {
    for (int j = 0; j < p.width; ++j)
      for (int c = 0; c < 3; ++c) {
        double v = std::clamp(p.at(c, i, j), 0.0, 1.0);
        row[size_t(j) * 3 + c] = png_byte(std::lround(v * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Panorama load_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("libpng failure reading " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  int w = int(png_get_image_width(png, info));
  int h = int(png_get_image_height(png, info));
  Panorama p(h, w);
  std::vector<png_byte> row(size_t(w) * 3);
  for (int i = 0; i < h; ++i) {
    png_read_row(png, row.data(), nullptr);
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c)
        p.at(c, i, j) = row[size_t(j) * 3 + c] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return p;
}

inline void save_annotation(const std::filesystem::path& path,
                            const CornerAnnotation& ann) {
  nlohmann::json doc;
  doc["h_cam"] = ann.h_cam;
  doc["corners"] = nlohmann::json::array();
  for (const Corner& c : ann.corners)
    doc["corners"].push_back({{"u", c.u}, {"vc", c.vc}, {"vf", c.vf}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

inline CornerAnnotation load_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in);
  CornerAnnotation ann;
  ann.h_cam = doc.at("h_cam").get<double>();
  for (const auto& c : doc.at("corners"))
    ann.corners.push_back({c.at("u").get<double>(), c.at("vc").get<double>(),
                           c.at("vf").get<double>()});
  return ann;
}

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'L', '3', '6', '0', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
  write_pod<uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            std::streamsize(v.size() * sizeof(double)));
}

inline std::vector<double> read_doubles(std::istream& in) {
  uint64_t n = read_pod<uint64_t>(in);
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

inline std::string read_string(std::istream& in) {
  uint32_t n = read_pod<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("truncated checkpoint");
  return s;
}

inline std::string predictor_config_json(const PredictorConfig& c) {
  nlohmann::json j;
  j["in_h"] = c.in_h;
  j["in_w"] = c.in_w;
  j["trunk_channels"] = c.trunk_channels;
  j["mix_channels"] = c.mix_channels;
  j["mix_kernel"] = c.mix_kernel;
  j["dropout_p"] = c.dropout_p;
  return j.dump();
}

inline PredictorConfig predictor_config_from_json(const std::string& s) {
  nlohmann::json j = nlohmann::json::parse(s);
  PredictorConfig c;
  c.in_h = j.at("in_h");
  c.in_w = j.at("in_w");
  c.trunk_channels = j.at("trunk_channels").get<std::vector<int>>();
  c.mix_channels = j.at("mix_channels");
  c.mix_kernel = j.at("mix_kernel");
  c.dropout_p = j.at("dropout_p");
  return c;
}

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path,
                            const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(detail::kCheckpointMagic, 8);
  detail::write_pod<uint32_t>(out, 1);  // format version
  std::string cfg_json = detail::predictor_config_json(ckpt.predictor);
  detail::write_pod<uint64_t>(out, detail::fnv1a(cfg_json));
  detail::write_string(out, cfg_json);
  detail::write_string(out, ckpt.mode);
  detail::write_pod<int64_t>(out, ckpt.t);
  detail::write_pod<int64_t>(out, ckpt.t_max);
  detail::write_pod<uint32_t>(out, uint32_t(ckpt.theta.segments.size()));
  for (const auto& s : ckpt.theta.segments) {
    detail::write_string(out, s.name);
    detail::write_pod<uint64_t>(out, s.offset);
    detail::write_pod<uint64_t>(out, s.length);
  }
  detail::write_doubles(out, ckpt.theta.values);
  detail::write_doubles(out, ckpt.teacher.values);
  detail::write_doubles(out, ckpt.adam.m);
  detail::write_doubles(out, ckpt.adam.v);
  detail::write_pod<int64_t>(out, ckpt.adam.t);
  if (!out) throw IoError("failed writing " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
    throw IoError("not a checkpoint file: " + path.string());
  uint32_t version = detail::read_pod<uint32_t>(in);
  if (version != 1) throw IoError("unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.config_fingerprint = detail::read_pod<uint64_t>(in);
  std::string cfg_json = detail::read_string(in);
  if (detail::fnv1a(cfg_json) != ckpt.config_fingerprint)
    throw IoError("checkpoint configuration fingerprint mismatch");
  ckpt.predictor = detail::predictor_config_from_json(cfg_json);
  ckpt.mode = detail::read_string(in);
  ckpt.t = detail::read_pod<int64_t>(in);
  ckpt.t_max = detail::read_pod<int64_t>(in);
  uint32_t nseg = detail::read_pod<uint32_t>(in);
  for (uint32_t k = 0; k < nseg; ++k) {
    ParamVector::Segment s;
    s.name = detail::read_string(in);
    s.offset = detail::read_pod<uint64_t>(in);
    s.length = detail::read_pod<uint64_t>(in);
    ckpt.theta.segments.push_back(s);
  }
  ckpt.theta.values = detail::read_doubles(in);
  ckpt.teacher.segments = ckpt.theta.segments;
  ckpt.teacher.values = detail::read_doubles(in);
  ckpt.adam.m = detail::read_doubles(in);
  ckpt.adam.v = detail::read_doubles(in);
  ckpt.adam.t = detail::read_pod<int64_t>(in);
  return ckpt;
}

inline void save_train_log(const std::filesystem::path& path,
                           const std::vector<LogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "t,lr,lambda,L_l,L_u,val_3diou\n";
  out.precision(12);
  for (const LogRow& r : rows) {
    out << r.t << ',' << r.lr << ',' << r.lambda << ',' << r.loss_labeled << ','
        << r.loss_unlabeled << ',';
    if (!std::isnan(r.val_iou3d)) out << r.val_iou3d;
    out << '\n';
  }
}

}  // namespace layout360
