// Copyright 2026 The tzal Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tzal/featio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "tzal/error.hpp"

namespace tzal {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t checked_u32(Eigen::Index n, const char* what) {
  if (n < 0 || static_cast<std::uint64_t>(n) > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError(std::string("dimension overflow: ") + what + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(n);
}

void put_matrix(std::string& out, const RowMatrixF& m) {
  const float* p = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f32(out, p[i]);
}

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string origin)
      : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw DataError(origin_ + ": truncated " + what + " (need " + std::to_string(n) +
                      " bytes, have " + std::to_string(remaining()) + ")");
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  RowMatrixF matrix(std::uint32_t rows, std::uint32_t cols, const char* what) {
    const std::uint64_t count = std::uint64_t{rows} * cols;
    need(count * 4, what);
    RowMatrixF m(rows, cols);
    float* p = m.data();
    for (std::uint64_t i = 0; i < count; ++i) {
      p[i] = f32(what);
      if (!std::isfinite(p[i])) {
        throw DataError(origin_ + ": non-finite value in " + what + " at row " +
                        std::to_string(i / cols) + ", col " + std::to_string(i % cols));
      }
    }
    return m;
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& bytes, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

struct RawContainer {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  float fps = 0.0f;
  RowMatrixF payload;
  std::optional<RowMatrixF> captions;
};

RawContainer read_container(const fs::path& path) {
  ByteReader r(slurp(path), path.string());
  const std::string magic = r.raw(4, "magic");
  if (std::memcmp(magic.data(), kFeatureMagic, 4) != 0) {
    throw DataError(path.string() + ": bad magic (expected \"TZAL\")");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kFeatureVersion) {
    throw DataError(path.string() + ": unsupported version " + std::to_string(version));
  }
  RawContainer c;
  c.rows = r.u32("header");
  c.cols = r.u32("header");
  c.fps = r.f32("header");
  const std::uint32_t flags = r.u32("header");
  if ((flags & ~kFlagHasCaptions) != 0) {
    throw DataError(path.string() + ": unknown flags " + std::to_string(flags));
  }
  c.payload = r.matrix(c.rows, c.cols, "frame payload");
  if (flags & kFlagHasCaptions) {
    const std::uint32_t n = r.u32("caption header");
    const std::uint32_t dc = r.u32("caption header");
    if (n != c.rows) {
      throw DataError(path.string() + ": caption rows " + std::to_string(n) +
                      " != frame rows " + std::to_string(c.rows));
    }
    c.captions = r.matrix(n, dc, "caption payload");
  }
  if (r.remaining() != 0) {
    throw DataError(path.string() + ": " + std::to_string(r.remaining()) +
                    " trailing bytes after payload");
  }
  return c;
}

std::string encode_container(float fps, const RowMatrixF& payload,
                             const std::optional<RowMatrixF>& captions) {
  std::string out;
  out.reserve(kFeatureHeaderBytes + payload.size() * 4 +
              (captions ? kCaptionHeaderBytes + captions->size() * 4 : 0));
  out.append(kFeatureMagic, 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, checked_u32(payload.rows(), "N"));
  put_u32(out, checked_u32(payload.cols(), "D_v"));
  put_f32(out, fps);
  put_u32(out, captions ? kFlagHasCaptions : 0u);
  put_matrix(out, payload);
  if (captions) {
    put_u32(out, checked_u32(captions->rows(), "N"));
    put_u32(out, checked_u32(captions->cols(), "D_c"));
    put_matrix(out, *captions);
  }
  return out;
}

bool all_finite(const RowMatrixF& m) { return m.allFinite(); }

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(where + ": missing field \"" + key + "\"");
  return *it;
}

double finite_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw DataError(where + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw DataError(where + ": non-finite number");
  return d;
}

// Header-only peek used to cross-check manifest shapes.
struct FeatureHeader {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::optional<std::uint32_t> caption_cols;
};

FeatureHeader peek_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string head(kFeatureHeaderBytes, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  ByteReader r(head.substr(0, static_cast<std::size_t>(in.gcount())), path.string());
  if (std::memcmp(r.raw(4, "magic").data(), kFeatureMagic, 4) != 0) {
    throw DataError(path.string() + ": bad magic (expected \"TZAL\")");
  }
  if (r.u32("version") != kFeatureVersion) throw DataError(path.string() + ": version mismatch");
  FeatureHeader h;
  h.rows = r.u32("header");
  h.cols = r.u32("header");
  r.f32("header");
  const std::uint32_t flags = r.u32("header");
  if (flags & kFlagHasCaptions) {
    in.seekg(static_cast<std::streamoff>(kFeatureHeaderBytes + std::uint64_t{h.rows} * h.cols * 4 + 4));
    std::string dc(4, '\0');
    in.read(dc.data(), 4);
    if (in.gcount() != 4) throw DataError(path.string() + ": truncated caption header");
    h.caption_cols = ByteReader(dc, path.string()).u32("caption header");
  }
  return h;
}

}  // namespace

void FeatureTrack::validate() const {
  if (frames.rows() < 1) throw DataError(video_id + ": track has no frames");
  if (frames.cols() < 1) throw DataError(video_id + ": frame dimension is zero");
  if (!(fps > 0.0f) || !std::isfinite(fps)) throw DataError(video_id + ": fps must be positive");
  if (!all_finite(frames)) throw DataError(video_id + ": non-finite frame embedding");
  if (captions) {
    if (captions->rows() != frames.rows()) {
      throw DataError(video_id + ": caption rows differ from frame rows");
    }
    if (captions->cols() < 1) throw DataError(video_id + ": caption dimension is zero");
    if (!all_finite(*captions)) throw DataError(video_id + ": non-finite caption embedding");
  }
}

bool bitwise_equal(const FeatureTrack& a, const FeatureTrack& b) {
  auto same = [](const RowMatrixF& x, const RowMatrixF& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           std::memcmp(x.data(), y.data(), sizeof(float) * x.size()) == 0;
  };
  if (a.video_id != b.video_id) return false;
  if (std::bit_cast<std::uint32_t>(a.fps) != std::bit_cast<std::uint32_t>(b.fps)) return false;
  if (!same(a.frames, b.frames)) return false;
  if (a.captions.has_value() != b.captions.has_value()) return false;
  return !a.captions || same(*a.captions, *b.captions);
}

int LabelBank::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void LabelBank::validate() const {
  if (names.empty()) throw DataError("label bank is empty");
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw DataError("duplicate label \"" + n + "\"");
  }
  if (texts.rows() != static_cast<Eigen::Index>(names.size())) {
    throw DataError("shape mismatch: text matrix has " + std::to_string(texts.rows()) +
                    " rows for " + std::to_string(names.size()) + " labels");
  }
  if (texts.cols() < 1) throw DataError("text matrix has zero columns");
  if (!texts.allFinite()) throw DataError("non-finite text embedding");
  if (proj_v.has_value() != proj_l.has_value()) {
    throw DataError("projections must be given as a pair (proj_v and proj_l)");
  }
  if (proj_v) {
    if (proj_l->rows() != texts.cols()) {
      throw DataError("shape mismatch: proj_l has " + std::to_string(proj_l->rows()) +
                      " rows, text dim is " + std::to_string(texts.cols()));
    }
    if (proj_v->cols() != proj_l->cols() || proj_v->cols() < 1) {
      throw DataError("shape mismatch: proj_v and proj_l disagree on the shared dimension");
    }
    if (!proj_v->allFinite() || !proj_l->allFinite()) {
      throw DataError("non-finite projection entry");
    }
  }
}

void write_feature_file(const FeatureTrack& track, const fs::path& path) {
  track.validate();
  spit(encode_container(track.fps, track.frames, track.captions), path);
}

FeatureTrack read_feature_file(const fs::path& path) {
  RawContainer c = read_container(path);
  FeatureTrack t;
  t.video_id = path.stem().string();
  t.fps = c.fps;
  t.frames = std::move(c.payload);
  t.captions = std::move(c.captions);
  t.validate();
  return t;
}

void write_matrix_file(const Eigen::MatrixXd& m, const fs::path& path) {
  if (!m.allFinite()) throw DataError("refusing to write non-finite matrix to " + path.string());
  const RowMatrixF f = m.cast<float>();
  spit(encode_container(0.0f, f, std::nullopt), path);
}

Eigen::MatrixXd read_matrix_file(const fs::path& path) {
  RawContainer c = read_container(path);
  if (c.captions) throw DataError(path.string() + ": matrix file carries a caption block");
  return c.payload.cast<double>();
}

void write_json_file(const json& doc, const fs::path& path) {
  spit(doc.dump(2) + "\n", path);
}

json read_json_file(const fs::path& path) {
  const std::string text = slurp(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
}

AnnotationSet read_annotations(const fs::path& path) {
  const json doc = read_json_file(path);
  const std::string where = path.string();
  AnnotationSet out;
  try {
    for (const auto& v : require(doc, "videos", where)) {
      const std::string id = require(v, "id", where).get<std::string>();
      const std::string vw = where + " video " + id;
      VideoAnnotation ann;
      ann.duration_s = finite_number(require(v, "duration", vw), vw);
      if (!(ann.duration_s > 0.0)) throw DataError(vw + ": duration must be positive");
      for (const auto& s : require(v, "segments", vw)) {
        GtSegment g;
        g.label = require(s, "label", vw).get<std::string>();
        g.start_s = finite_number(require(s, "start", vw), vw);
        g.end_s = finite_number(require(s, "end", vw), vw);
        if (g.start_s < 0.0 || !(g.end_s > g.start_s)) {
          throw DataError(vw + ": malformed segment [" + std::to_string(g.start_s) + ", " +
                          std::to_string(g.end_s) + "]");
        }
        if (g.end_s > ann.duration_s + 0.5) {
          throw DataError(vw + ": segment ends past the video duration");
        }
        ann.segments.push_back(std::move(g));
      }
      if (!out.emplace(id, std::move(ann)).second) throw DataError(where + ": duplicate video " + id);
    }
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  return out;
}

void write_annotations(const AnnotationSet& annotations, const fs::path& path) {
  json videos = json::array();
  for (const auto& [id, ann] : annotations) {
    json segs = json::array();
    for (const auto& s : ann.segments) {
      segs.push_back({{"label", s.label}, {"start", s.start_s}, {"end", s.end_s}});
    }
    videos.push_back({{"id", id}, {"duration", ann.duration_s}, {"segments", segs}});
  }
  write_json_file(json{{"videos", videos}}, path);
}

json predictions_to_json(const PredictionSet& preds) {
  json videos = json::array();
  for (const auto& v : preds.videos) {
    json props = json::array();
    for (const auto& p : v.proposals) {
      props.push_back({{"label", p.label}, {"start", p.start_s}, {"end", p.end_s}, {"score", p.score}});
    }
    videos.push_back({{"id", v.id}, {"proposals", props}});
  }
  json doc = json::object();
  if (!preds.config.is_null()) doc["config"] = preds.config;
  doc["videos"] = videos;
  return doc;
}

PredictionSet predictions_from_json(const json& doc) {
  const std::string where = "predictions";
  PredictionSet out;
  try {
    if (auto it = doc.find("config"); it != doc.end()) out.config = *it;
    for (const auto& v : require(doc, "videos", where)) {
      VideoPredictions vp;
      vp.id = require(v, "id", where).get<std::string>();
      const std::string vw = where + " video " + vp.id;
      for (const auto& p : require(v, "proposals", vw)) {
        PredictedSegment s;
        s.label = require(p, "label", vw).get<std::string>();
        s.start_s = finite_number(require(p, "start", vw), vw);
        s.end_s = finite_number(require(p, "end", vw), vw);
        s.score = finite_number(require(p, "score", vw), vw);
        if (!(s.start_s < s.end_s)) throw DataError(vw + ": proposal with start >= end");
        vp.proposals.push_back(std::move(s));
      }
      out.videos.push_back(std::move(vp));
    }
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  return out;
}

void write_predictions(const PredictionSet& preds, const fs::path& path) {
  write_json_file(predictions_to_json(preds), path);
}

PredictionSet read_predictions(const fs::path& path) {
  try {
    return predictions_from_json(read_json_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Manifest read_manifest(const fs::path& path) {
  const json doc = read_json_file(path);
  const std::string where = path.string();
  Manifest m;
  m.directory = path.parent_path();
  auto resolve = [&](const json& v) { return m.directory / fs::path(v.get<std::string>()); };
  try {
    m.bank.names = require(doc, "labels", where).get<std::vector<std::string>>();
    m.bank.texts = read_matrix_file(resolve(require(doc, "text_file", where)));
    if (auto it = doc.find("prompt_template"); it != doc.end()) {
      m.bank.prompt_template = it->get<std::string>();
    }
    if (auto it = doc.find("projections"); it != doc.end() && !it->is_null()) {
      m.bank.proj_v = read_matrix_file(resolve(require(*it, "proj_v", where)));
      m.bank.proj_l = read_matrix_file(resolve(require(*it, "proj_l", where)));
    }
    m.bank.validate();

    std::set<std::string> ids;
    for (const auto& v : require(doc, "videos", where)) {
      VideoRef ref;
      ref.id = require(v, "id", where).get<std::string>();
      ref.feature_file = resolve(require(v, "feature_file", where));
      if (!ids.insert(ref.id).second) throw DataError(where + ": duplicate video id " + ref.id);
      m.videos.push_back(std::move(ref));
    }

    const Eigen::Index expected_dv =
        m.bank.proj_v ? m.bank.proj_v->rows() : m.bank.text_dim();
    for (const auto& ref : m.videos) {
      const FeatureHeader h = peek_header(ref.feature_file);
      if (h.cols != expected_dv) {
        throw DataError("shape mismatch: video " + ref.id + " has frame dim " +
                        std::to_string(h.cols) + ", " +
                        (m.bank.proj_v ? "proj_v has " : "text dim is ") +
                        std::to_string(expected_dv) + " rows");
      }
      if (h.caption_cols && *h.caption_cols != m.bank.text_dim()) {
        throw DataError("shape mismatch: video " + ref.id + " caption dim " +
                        std::to_string(*h.caption_cols) + " != text dim " +
                        std::to_string(m.bank.text_dim()));
      }
    }

    if (auto it = doc.find("annotations"); it != doc.end() && !it->is_null()) {
      m.annotations_file = resolve(*it);
      m.annotations = read_annotations(*m.annotations_file);
      for (const auto& [id, ann] : *m.annotations) {
        for (const auto& s : ann.segments) {
          if (m.bank.index_of(s.label) < 0) {
            throw DataError("annotation for video " + id + " references unknown label \"" +
                            s.label + "\"");
          }
        }
      }
    }
    if (auto it = doc.find("config"); it != doc.end()) m.config = *it;
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  // Writes the JSON plus the label-bank matrices next to it. Feature and
  // annotation files are the caller's.
  manifest.bank.validate();
  const fs::path dir = path.parent_path();
  auto rel = [&](const fs::path& p) { return p.is_absolute() ? fs::relative(p, dir).generic_string() : p.generic_string(); };
  json doc;
  doc["labels"] = manifest.bank.names;
  doc["text_file"] = "texts.tzal";
  doc["prompt_template"] = manifest.bank.prompt_template;
  json videos = json::array();
  for (const auto& v : manifest.videos) videos.push_back({{"id", v.id}, {"feature_file", rel(v.feature_file)}});
  doc["videos"] = videos;
  if (manifest.bank.has_projections()) {
    doc["projections"] = {{"proj_v", "proj_v.tzal"}, {"proj_l", "proj_l.tzal"}};
    write_matrix_file(*manifest.bank.proj_v, dir / "proj_v.tzal");
    write_matrix_file(*manifest.bank.proj_l, dir / "proj_l.tzal");
  }
  if (manifest.annotations_file) doc["annotations"] = rel(*manifest.annotations_file);
  if (!manifest.config.is_null()) doc["config"] = manifest.config;
  write_matrix_file(manifest.bank.texts, dir / "texts.tzal");
  write_json_file(doc, path);
}

}  // namespace tzal
