// Copyright 2026 The noptc Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "noptc/serdes.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <set>

namespace noptc {
namespace {

constexpr uint32_t kNoQuant = 0xffffffffu;

uint64_t align8(uint64_t n) { return (n + 7) & ~uint64_t{7}; }

class Writer {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) { put(v, 2); }
  void u32(uint32_t v) { put(v, 4); }
  void u64(uint64_t v) { put(v, 8); }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void pad8() { buf_.resize(align8(buf_.size()), 0); }
  void patch_u64(size_t at, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_[at + i] = static_cast<uint8_t>(v >> (8 * i));
  }
  size_t size() const { return buf_.size(); }
  std::vector<uint8_t>& buf() { return buf_; }

 private:
  void put(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> buf_;
};

class StringTable {
 public:
  std::pair<uint32_t, uint32_t> add(const std::string& s) {
    auto it = index_.find(s);
    if (it != index_.end()) return {it->second, static_cast<uint32_t>(s.size())};
    uint32_t off = static_cast<uint32_t>(w_.size());
    w_.bytes({reinterpret_cast<const uint8_t*>(s.data()), s.size()});
    index_.emplace(s, off);
    return {off, static_cast<uint32_t>(s.size())};
  }
  void ref(Writer& w, const std::string& s) {
    auto [off, len] = add(s);
    w.u32(off);
    w.u32(len);
  }
  std::vector<uint8_t>& buf() { return w_.buf(); }

 private:
  Writer w_;
  std::map<std::string, uint32_t> index_;
};

enum class AttrKind : uint8_t { kInt = 0, kFloat = 1, kString = 2, kInts = 3, kFloats = 4 };

std::vector<uint8_t> encode(const Graph& g, FileKind kind, const MomentMap& moments,
                            int64_t* payload_total);

void write_attr(Writer& w, StringTable& strings, const std::string& key, const AttrValue& v) {
  strings.ref(w, key);
  w.u8(static_cast<uint8_t>(v.index()));
  w.u8(0);
  w.u16(0);
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, int64_t>) {
          w.u32(1);
          w.i64(x);
        } else if constexpr (std::is_same_v<T, double>) {
          w.u32(1);
          w.f64(x);
        } else if constexpr (std::is_same_v<T, std::string>) {
          w.u32(1);
          strings.ref(w, x);
        } else if constexpr (std::is_same_v<T, std::vector<int64_t>>) {
          w.u32(static_cast<uint32_t>(x.size()));
          for (int64_t e : x) w.i64(e);
        } else {
          w.u32(static_cast<uint32_t>(x.size()));
          for (double e : x) w.f64(e);
        }
      },
      v);
}

std::vector<uint8_t> encode(const Graph& g, FileKind kind, const MomentMap& moments,
                            int64_t* payload_total) {
  StringTable strings;
  Writer tensors, quant, nodes, io, subgraphs;

  tensors.u32(static_cast<uint32_t>(g.tensors.size()));
  tensors.u32(0);
  uint32_t quant_count = 0;
  for (const TensorSpec& t : g.tensors) {
    if (t.quant) ++quant_count;
  }
  quant.u32(quant_count);
  quant.u32(0);
  uint32_t quant_index = 0;
  for (const TensorSpec& t : g.tensors) {
    tensors.i32(t.id);
    tensors.u8(static_cast<uint8_t>(t.dtype));
    tensors.u8(t.shape_known ? 1 : 0);
    tensors.u16(static_cast<uint16_t>(t.shape.size()));
    if (t.quant) {
      const QuantParams& q = *t.quant;
      tensors.u32(quant_index++);
      quant.u8(static_cast<uint8_t>(q.bit_width));
      quant.u8(static_cast<uint8_t>(q.scheme));
      quant.u16(0);
      quant.i32(q.axis);
      quant.u32(static_cast<uint32_t>(q.scales.size()));
      quant.u32(static_cast<uint32_t>(q.zero_points.size()));
      for (float s : q.scales) quant.f32(s);
      for (int32_t z : q.zero_points) quant.i32(z);
    } else {
      tensors.u32(kNoQuant);
    }
    strings.ref(tensors, t.name);
    for (int64_t d : t.shape) tensors.i64(d);
  }

  nodes.u32(static_cast<uint32_t>(g.nodes.size()));
  nodes.u32(0);
  for (const Node& n : g.nodes) {
    nodes.i32(n.id);
    nodes.u16(static_cast<uint16_t>(n.op));
    nodes.u16(0);
    nodes.u32(static_cast<uint32_t>(n.inputs.size()));
    nodes.u32(static_cast<uint32_t>(n.outputs.size()));
    nodes.u32(static_cast<uint32_t>(n.control_deps.size()));
    nodes.u32(static_cast<uint32_t>(n.attrs.size()));
    for (TensorId t : n.inputs) nodes.i32(t);
    for (TensorId t : n.outputs) nodes.i32(t);
    for (NodeId c : n.control_deps) nodes.i32(c);
    for (const auto& [key, value] : n.attrs) write_attr(nodes, strings, key, value);
  }

  io.i32(g.next_tensor_id);
  io.i32(g.next_node_id);
  io.u32(static_cast<uint32_t>(g.inputs.size()));
  io.u32(static_cast<uint32_t>(g.outputs.size()));
  for (TensorId t : g.inputs) io.i32(t);
  for (TensorId t : g.outputs) io.i32(t);

  subgraphs.u32(static_cast<uint32_t>(g.subgraphs.size()));
  subgraphs.u32(0);
  int64_t nested_payload = 0;
  for (const Graph& sub : g.subgraphs) {
    int64_t p = 0;
    std::vector<uint8_t> image = encode(sub, FileKind::kModel, {}, &p);
    nested_payload += p;
    subgraphs.u64(image.size());
    subgraphs.bytes(image);
    subgraphs.pad8();
  }

  // Trainable tensors of a checkpoint: every top-level float32 constant.
  std::vector<std::pair<TensorId, const Moments*>> trainable;
  std::vector<Moments> zero_moments;
  if (kind == FileKind::kCheckpoint) {
    for (const ConstData& c : g.constants) {
      const TensorSpec* t = g.find_tensor(c.tensor_id);
      if (t && t->dtype == DType::kF32) {
        auto it = moments.find(c.tensor_id);
        trainable.emplace_back(c.tensor_id, it == moments.end() ? nullptr : &it->second);
      }
    }
  }

  // Payload blob, offsets relative to its start (patched to absolute below).
  Writer payload;
  std::vector<uint64_t> const_rel;
  int64_t payload_bytes = 0;
  for (const ConstData& c : g.constants) {
    payload.pad8();
    const_rel.push_back(payload.size());
    payload.bytes(c.payload);
    payload_bytes += static_cast<int64_t>(c.payload.size());
  }
  std::vector<uint64_t> moment_rel;
  std::vector<uint32_t> moment_count;
  for (const auto& [id, m] : trainable) {
    const ConstData* c = g.find_constant(id);
    uint32_t n = static_cast<uint32_t>(c->payload.size() / 4);
    if (m && (m->first.size() != n || m->second.size() != n)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "moment arrays of tensor " + std::to_string(id) + " do not match its size");
    }
    payload.pad8();
    moment_rel.push_back(payload.size());
    moment_count.push_back(n);
    for (uint32_t i = 0; i < n; ++i) payload.f32(m ? m->first[i] : 0.0f);
    for (uint32_t i = 0; i < n; ++i) payload.f32(m ? m->second[i] : 0.0f);
    payload_bytes += 8 * static_cast<int64_t>(n);
  }
  if (payload_total) *payload_total = payload_bytes + nested_payload;

  uint64_t const_table_size = 8 + 24 * g.constants.size();
  uint64_t moment_table_size = 8 + 24 * trainable.size();

  std::vector<std::pair<SectionId, uint64_t>> layout = {
      {SectionId::kStrings, strings.buf().size()},
      {SectionId::kTensors, tensors.size()},
      {SectionId::kQuant, quant.size()},
      {SectionId::kConstants, const_table_size},
      {SectionId::kNodes, nodes.size()},
      {SectionId::kIo, io.size()},
      {SectionId::kSubgraphs, subgraphs.size()},
      {SectionId::kPayload, payload.size()},
  };
  if (kind == FileKind::kCheckpoint) layout.emplace_back(SectionId::kMoments, moment_table_size);

  std::vector<uint64_t> offsets;
  uint64_t pos = kHeaderBytes + kSectionEntryBytes * layout.size();
  for (const auto& [id, size] : layout) {
    pos = align8(pos);
    offsets.push_back(pos);
    pos += size;
  }
  uint64_t file_size = align8(pos);
  uint64_t payload_base = offsets[7];

  Writer constants;
  constants.u32(static_cast<uint32_t>(g.constants.size()));
  constants.u32(0);
  for (size_t i = 0; i < g.constants.size(); ++i) {
    constants.i32(g.constants[i].tensor_id);
    constants.u32(0);
    constants.u64(payload_base + const_rel[i]);
    constants.u64(g.constants[i].payload.size());
  }
  Writer moment_table;
  moment_table.u32(static_cast<uint32_t>(trainable.size()));
  moment_table.u32(0);
  for (size_t i = 0; i < trainable.size(); ++i) {
    moment_table.i32(trainable[i].first);
    moment_table.u32(moment_count[i]);
    moment_table.u64(payload_base + moment_rel[i]);
    moment_table.u64(8 * uint64_t{moment_count[i]});
  }

  Writer out;
  out.bytes({reinterpret_cast<const uint8_t*>(kMagic), 4});
  out.u16(kFormatVersion);
  out.u16(static_cast<uint16_t>(kind));
  out.u32(static_cast<uint32_t>(layout.size()));
  out.u32(static_cast<uint32_t>(file_size));
  for (size_t i = 0; i < layout.size(); ++i) {
    out.u32(static_cast<uint32_t>(layout[i].first));
    out.u32(0);
    out.u64(offsets[i]);
    out.u64(layout[i].second);
  }
  std::vector<std::vector<uint8_t>*> bodies = {&strings.buf(), &tensors.buf(),  &quant.buf(),
                                              &constants.buf(), &nodes.buf(), &io.buf(),
                                              &subgraphs.buf(), &payload.buf()};
  if (kind == FileKind::kCheckpoint) bodies.push_back(&moment_table.buf());
  for (auto* body : bodies) {
    out.pad8();
    out.bytes(*body);
  }
  out.pad8();
  return std::move(out.buf());
}

// ---------------------------------------------------------------------------
// Decoding.

// Bounds-checked little-endian reads over [pos, end) of the whole file.
// Offsets in errors are absolute (`base` is the image's offset in the
// outermost file).
class Reader {
 public:
  Reader(std::span<const uint8_t> data, uint64_t pos, uint64_t end, uint64_t base)
      : data_(data), pos_(pos), end_(end), base_(base) {}

  uint8_t u8() { return static_cast<uint8_t>(take(1)); }
  uint16_t u16() { return static_cast<uint16_t>(take(2)); }
  uint32_t u32() { return static_cast<uint32_t>(take(4)); }
  uint64_t u64() { return take(8); }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::span<const uint8_t> raw(uint64_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  // Rejects element counts that cannot fit in the rest of the section
  // before anything is allocated for them.
  uint64_t count(uint64_t n, uint64_t min_record_bytes) {
    if (min_record_bytes > 0 && n > (end_ - pos_) / min_record_bytes) {
      throw Error(ErrorCode::kTruncatedSection, "record count exceeds section", abs(end_));
    }
    return n;
  }
  uint64_t pos() const { return pos_; }
  uint64_t end() const { return end_; }
  uint64_t abs(uint64_t p) const { return base_ + p; }
  void seek(uint64_t p) { pos_ = p; }

 private:
  void need(uint64_t n) {
    if (n > end_ - pos_) {
      throw Error(ErrorCode::kTruncatedSection, "record runs past section end", abs(end_));
    }
  }
  uint64_t take(int n) {
    need(n);
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const uint8_t> data_;
  uint64_t pos_;
  uint64_t end_;
  uint64_t base_;
};

struct Section {
  uint64_t offset = 0;
  uint64_t size = 0;
  bool present = false;
};

struct Image {
  std::span<const uint8_t> data;
  uint64_t base = 0;
  FileKind kind = FileKind::kModel;
  std::array<Section, 10> sections{};

  Reader reader(SectionId id) const {
    const Section& s = sections[static_cast<size_t>(id)];
    return Reader(data, s.offset, s.offset + s.size, base);
  }
  const Section& section(SectionId id) const { return sections[static_cast<size_t>(id)]; }
};

[[noreturn]] void fail(ErrorCode code, const std::string& msg, uint64_t offset) {
  throw Error(code, msg, offset);
}

Image parse_header(std::span<const uint8_t> data, uint64_t base) {
  const uint64_t n = data.size();
  size_t magic_len = std::min<uint64_t>(n, 4);
  if (magic_len > 0 && std::memcmp(data.data(), kMagic, magic_len) != 0) {
    fail(ErrorCode::kBadMagic, "file does not start with TOPT", base);
  }
  if (n < 4) fail(ErrorCode::kTruncatedSection, "magic truncated", base + n);
  if (n < kHeaderBytes) fail(ErrorCode::kTruncatedSection, "header truncated", base + n);
  Reader r(data, 4, kHeaderBytes, base);
  uint16_t version = r.u16();
  if (version != kFormatVersion) {
    fail(ErrorCode::kUnsupportedVersion, "version " + std::to_string(version), base + 4);
  }
  Image img;
  img.data = data;
  img.base = base;
  uint16_t kind = r.u16();
  if (kind > 1) fail(ErrorCode::kMalformedRecord, "unknown file kind", base + 6);
  img.kind = static_cast<FileKind>(kind);
  uint32_t section_count = r.u32();
  uint32_t file_size = r.u32();
  uint64_t table_end = kHeaderBytes + kSectionEntryBytes * uint64_t{section_count};
  if (section_count > 16) fail(ErrorCode::kMalformedRecord, "too many sections", base + 8);
  if (table_end > n) fail(ErrorCode::kTruncatedSection, "section table truncated", base + n);
  Reader t(data, kHeaderBytes, table_end, base);
  for (uint32_t i = 0; i < section_count; ++i) {
    uint64_t entry = t.pos();
    uint32_t id = t.u32();
    t.u32();
    uint64_t offset = t.u64();
    uint64_t size = t.u64();
    if (id < static_cast<uint32_t>(SectionId::kStrings) ||
        id > static_cast<uint32_t>(SectionId::kMoments)) {
      fail(ErrorCode::kUnknownSection, "section id " + std::to_string(id), base + entry);
    }
    Section& s = img.sections[id];
    if (s.present) fail(ErrorCode::kMalformedRecord, "duplicate section", base + entry);
    if (offset < table_end || offset % 8 != 0 || offset > file_size) {
      fail(ErrorCode::kOffsetOutOfBounds, "bad section offset", base + entry + 8);
    }
    if (size > file_size - offset) {
      fail(ErrorCode::kOffsetOutOfBounds, "section exceeds file size", base + entry + 16);
    }
    if (offset + size > n) {
      fail(ErrorCode::kTruncatedSection, "section " + std::to_string(id) + " truncated",
           base + n);
    }
    s = {offset, size, true};
  }
  if (n < file_size) fail(ErrorCode::kTruncatedSection, "file truncated", base + n);
  if (n > file_size) fail(ErrorCode::kMalformedRecord, "trailing bytes", base + file_size);
  for (uint32_t id = 1; id <= static_cast<uint32_t>(SectionId::kPayload); ++id) {
    if (!img.sections[id].present) {
      fail(ErrorCode::kMalformedRecord, "missing section " + std::to_string(id), base + 8);
    }
  }
  bool has_moments = img.sections[static_cast<size_t>(SectionId::kMoments)].present;
  if (has_moments != (img.kind == FileKind::kCheckpoint)) {
    fail(ErrorCode::kMalformedRecord, "moment section does not match file kind", base + 6);
  }
  return img;
}

class StringReader {
 public:
  explicit StringReader(const Image& img) : img_(img), s_(img.section(SectionId::kStrings)) {}
  std::string read(Reader& r) const {
    uint64_t at = r.pos();
    uint64_t off = r.u32();
    uint64_t len = r.u32();
    if (off > s_.size || len > s_.size - off) {
      fail(ErrorCode::kOffsetOutOfBounds, "string reference outside string table",
           img_.base + at);
    }
    const char* p = reinterpret_cast<const char*>(img_.data.data() + s_.offset + off);
    return std::string(p, len);
  }

 private:
  const Image& img_;
  Section s_;
};

Graph decode(std::span<const uint8_t> data, uint64_t base, MomentMap* moments);

Attrs read_attrs(Reader& r, const StringReader& strings, uint32_t count) {
  Attrs attrs;
  for (uint32_t i = 0; i < count; ++i) {
    uint64_t at = r.abs(r.pos());
    std::string key = strings.read(r);
    uint8_t kind = r.u8();
    r.u8();
    r.u16();
    uint64_t n = r.u32();
    AttrValue v;
    switch (static_cast<AttrKind>(kind)) {
      case AttrKind::kInt:
        v = r.i64();
        break;
      case AttrKind::kFloat:
        v = r.f64();
        break;
      case AttrKind::kString:
        v = strings.read(r);
        break;
      case AttrKind::kInts: {
        std::vector<int64_t> xs(r.count(n, 8));
        for (auto& x : xs) x = r.i64();
        v = std::move(xs);
        break;
      }
      case AttrKind::kFloats: {
        std::vector<double> xs(r.count(n, 8));
        for (auto& x : xs) x = r.f64();
        v = std::move(xs);
        break;
      }
      default:
        fail(ErrorCode::kMalformedRecord, "unknown attribute kind", at + 8);
    }
    if (kind <= 2 && n != 1) fail(ErrorCode::kMalformedRecord, "scalar attribute count", at + 12);
    if (!attrs.emplace(std::move(key), std::move(v)).second) {
      fail(ErrorCode::kMalformedRecord, "duplicate attribute", at);
    }
  }
  return attrs;
}

std::vector<int32_t> read_ids(Reader& r, uint64_t n) {
  std::vector<int32_t> ids(r.count(n, 4));
  for (auto& id : ids) id = r.i32();
  return ids;
}

Graph decode(std::span<const uint8_t> data, uint64_t base, MomentMap* moments) {
  Image img = parse_header(data, base);
  StringReader strings(img);
  Graph g;

  // Quant params first so tensors can reference them by index.
  std::vector<QuantParams> quant;
  {
    Reader r = img.reader(SectionId::kQuant);
    uint64_t n = r.count(r.u32(), 16);
    r.u32();
    for (uint64_t i = 0; i < n; ++i) {
      uint64_t at = r.abs(r.pos());
      QuantParams q;
      q.bit_width = r.u8();
      uint8_t scheme = r.u8();
      if (scheme > 1) fail(ErrorCode::kMalformedRecord, "unknown quant scheme", at + 1);
      q.scheme = static_cast<QuantScheme>(scheme);
      r.u16();
      q.axis = r.i32();
      uint64_t ns = r.u32();
      uint64_t nz = r.u32();
      q.scales.resize(r.count(ns, 4));
      for (float& s : q.scales) s = r.f32();
      q.zero_points.resize(r.count(nz, 4));
      for (int32_t& z : q.zero_points) z = r.i32();
      quant.push_back(std::move(q));
    }
  }
  {
    Reader r = img.reader(SectionId::kTensors);
    uint64_t n = r.count(r.u32(), 20);
    r.u32();
    std::set<TensorId> seen;
    for (uint64_t i = 0; i < n; ++i) {
      uint64_t at = r.abs(r.pos());
      TensorSpec t;
      t.id = r.i32();
      uint8_t dtype = r.u8();
      if (dtype > static_cast<uint8_t>(DType::kBool)) {
        fail(ErrorCode::kMalformedRecord, "unknown dtype", at + 4);
      }
      t.dtype = static_cast<DType>(dtype);
      uint8_t flags = r.u8();
      if (flags > 1) fail(ErrorCode::kMalformedRecord, "unknown tensor flags", at + 5);
      t.shape_known = flags & 1;
      uint64_t rank = r.u16();
      uint32_t qi = r.u32();
      if (qi != kNoQuant) {
        if (qi >= quant.size()) {
          fail(ErrorCode::kOffsetOutOfBounds, "quant index outside quant table", at + 8);
        }
        t.quant = quant[qi];
      }
      t.name = strings.read(r);
      t.shape.resize(r.count(rank, 8));
      for (int64_t& d : t.shape) d = r.i64();
      if (!seen.insert(t.id).second) fail(ErrorCode::kMalformedRecord, "duplicate tensor", at);
      g.tensors.push_back(std::move(t));
    }
  }
  const Section payload = img.section(SectionId::kPayload);
  {
    Reader r = img.reader(SectionId::kConstants);
    uint64_t n = r.count(r.u32(), 24);
    r.u32();
    for (uint64_t i = 0; i < n; ++i) {
      uint64_t at = r.abs(r.pos());
      ConstData c;
      c.tensor_id = r.i32();
      r.u32();
      uint64_t offset = r.u64();
      uint64_t size = r.u64();
      if (offset < payload.offset || offset % 8 != 0 || offset > payload.offset + payload.size ||
          size > payload.offset + payload.size - offset) {
        fail(ErrorCode::kOffsetOutOfBounds, "constant payload outside payload section", at + 8);
      }
      const TensorSpec* t = g.find_tensor(c.tensor_id);
      if (!t) fail(ErrorCode::kMalformedRecord, "constant of unknown tensor", at);
      if (t->shape_known && size != element_count(t->shape) * dtype_width(t->dtype)) {
        fail(ErrorCode::kMalformedRecord, "constant size does not match its tensor", at + 16);
      }
      auto bytes = data.subspan(offset, size);
      c.payload.assign(bytes.begin(), bytes.end());
      g.constants.push_back(std::move(c));
    }
  }
  {
    Reader r = img.reader(SectionId::kNodes);
    uint64_t n = r.count(r.u32(), 24);
    r.u32();
    for (uint64_t i = 0; i < n; ++i) {
      uint64_t at = r.abs(r.pos());
      Node node;
      node.id = r.i32();
      uint16_t op = r.u16();
      if (op >= kNumOpKinds) fail(ErrorCode::kMalformedRecord, "unknown op", at + 4);
      node.op = static_cast<OpKind>(op);
      r.u16();
      uint64_t ni = r.u32(), no = r.u32(), nc = r.u32(), na = r.u32();
      node.inputs = read_ids(r, ni);
      node.outputs = read_ids(r, no);
      node.control_deps = read_ids(r, nc);
      node.attrs = read_attrs(r, strings, static_cast<uint32_t>(r.count(na, 16)));
      g.nodes.push_back(std::move(node));
    }
  }
  {
    Reader r = img.reader(SectionId::kIo);
    g.next_tensor_id = r.i32();
    g.next_node_id = r.i32();
    uint64_t ni = r.u32(), no = r.u32();
    g.inputs = read_ids(r, ni);
    g.outputs = read_ids(r, no);
  }
  {
    Reader r = img.reader(SectionId::kSubgraphs);
    uint64_t n = r.count(r.u32(), 8);
    r.u32();
    for (uint64_t i = 0; i < n; ++i) {
      uint64_t size = r.u64();
      uint64_t start = r.pos();
      auto image = r.raw(size);
      g.subgraphs.push_back(decode(image, base + start, nullptr));
      r.seek(std::min(r.end(), align8(r.pos())));
    }
  }
  if (img.kind == FileKind::kCheckpoint && moments) {
    Reader r = img.reader(SectionId::kMoments);
    uint64_t n = r.count(r.u32(), 24);
    r.u32();
    for (uint64_t i = 0; i < n; ++i) {
      uint64_t at = r.abs(r.pos());
      TensorId id = r.i32();
      uint64_t count = r.u32();
      uint64_t offset = r.u64();
      uint64_t size = r.u64();
      if (offset < payload.offset || offset % 8 != 0 || offset > payload.offset + payload.size ||
          size > payload.offset + payload.size - offset) {
        fail(ErrorCode::kOffsetOutOfBounds, "moments outside payload section", at + 8);
      }
      if (size != 8 * count) fail(ErrorCode::kMalformedRecord, "moment size", at + 16);
      Reader m(data, offset, offset + size, base);
      Moments mm;
      mm.first.resize(count);
      mm.second.resize(count);
      for (float& x : mm.first) x = m.f32();
      for (float& x : mm.second) x = m.f32();
      (*moments)[id] = std::move(mm);
    }
  }
  return g;
}

Graph decode_validated(std::span<const uint8_t> bytes, MomentMap* moments) {
  Graph g = decode(bytes, 0, moments);
  ValidationResult v = validate(g);
  if (!v.ok()) fail(ErrorCode::kMalformedRecord, "decoded graph is invalid: " + v.summary(), 0);
  return g;
}

constexpr std::array<std::string_view, 44> kCKeywords = {
    "auto",     "break",    "case",     "char",      "const",    "continue", "default",
    "do",       "double",   "else",     "enum",      "extern",   "float",    "for",
    "goto",     "if",       "inline",   "int",       "long",     "register", "restrict",
    "return",   "short",    "signed",   "sizeof",    "static",   "struct",   "switch",
    "typedef",  "union",    "unsigned", "void",      "volatile", "while",    "_Bool",
    "_Complex", "_Imaginary", "bool",   "true",      "false",    "alignas",  "alignof",
    "nullptr",  "constexpr"};

}  // namespace

ModelBinary serialize(const Graph& graph) {
  ModelBinary out;
  out.bytes = encode(graph, FileKind::kModel, {}, &out.payload_bytes);
  return out;
}

Graph deserialize(std::span<const uint8_t> bytes) { return decode_validated(bytes, nullptr); }

ModelBinary serialize_checkpoint(const Graph& graph, const MomentMap& moments) {
  ModelBinary out;
  out.bytes = encode(graph, FileKind::kCheckpoint, moments, &out.payload_bytes);
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const uint8_t> bytes) {
  Checkpoint c;
  c.graph = decode_validated(bytes, &c.moments);
  return c;
}

FileKind file_kind(std::span<const uint8_t> bytes) { return parse_header(bytes, 0).kind; }

std::optional<std::span<const uint8_t>> constant_payload_view(std::span<const uint8_t> bytes,
                                                              TensorId tensor) {
  Image img = parse_header(bytes, 0);
  const Section payload = img.section(SectionId::kPayload);
  Reader r = img.reader(SectionId::kConstants);
  uint64_t n = r.count(r.u32(), 24);
  r.u32();
  for (uint64_t i = 0; i < n; ++i) {
    uint64_t at = r.pos();
    TensorId id = r.i32();
    r.u32();
    uint64_t offset = r.u64();
    uint64_t size = r.u64();
    if (id != tensor) continue;
    if (offset < payload.offset || offset > payload.offset + payload.size ||
        size > payload.offset + payload.size - offset) {
      fail(ErrorCode::kOffsetOutOfBounds, "constant payload outside payload section", at + 8);
    }
    return bytes.subspan(offset, size);
  }
  return std::nullopt;
}

bool is_c_identifier(std::string_view symbol) {
  if (symbol.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(symbol[0])) || symbol[0] == '_')) return false;
  for (char ch : symbol) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_')) return false;
  }
  return std::find(kCKeywords.begin(), kCKeywords.end(), symbol) == kCKeywords.end();
}

std::string emit_c_array(std::span<const uint8_t> bytes, std::string_view symbol) {
  if (!is_c_identifier(symbol)) {
    throw Error(ErrorCode::kInvalidIdentifier, "not a C identifier: '" + std::string(symbol) + "'");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = "const unsigned char " + std::string(symbol) + "[] = {\n";
  out.reserve(out.size() + bytes.size() * 6 + 64);
  for (size_t i = 0; i < bytes.size(); ++i) {
    if (i % 12 == 0) out += "  ";
    out += "0x";
    out += kHex[bytes[i] >> 4];
    out += kHex[bytes[i] & 15];
    if (i + 1 < bytes.size()) out += (i % 12 == 11) ? ",\n" : ", ";
  }
  if (!bytes.empty()) out += "\n";
  out += "};\n";
  out += "const unsigned int " + std::string(symbol) + "_len = " + std::to_string(bytes.size()) +
         ";\n";
  return out;
}

std::vector<uint8_t> parse_c_array(std::string_view src) {
  auto bad = [](const std::string& msg, size_t at) {
    throw Error(ErrorCode::kMalformedRecord, "C array: " + msg, at);
  };
  size_t open = src.find('{');
  size_t close = src.find('}', open == std::string_view::npos ? 0 : open);
  if (open == std::string_view::npos || close == std::string_view::npos) bad("no initializer", 0);
  std::vector<uint8_t> out;
  size_t i = open + 1;
  auto skip_space = [&] {
    while (i < close && std::isspace(static_cast<unsigned char>(src[i]))) ++i;
  };
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  skip_space();
  while (i < close) {
    if (close - i < 4 || src[i] != '0' || (src[i + 1] != 'x' && src[i + 1] != 'X')) {
      bad("expected 0xNN", i);
    }
    int hi = hex(src[i + 2]), lo = hex(src[i + 3]);
    if (hi < 0 || lo < 0) bad("bad hex digit", i);
    out.push_back(static_cast<uint8_t>(hi * 16 + lo));
    i += 4;
    skip_space();
    if (i < close) {
      if (src[i] != ',') bad("expected ','", i);
      ++i;
      skip_space();
    }
  }
  size_t len_at = src.find("_len", close);
  if (len_at != std::string_view::npos) {
    size_t eq = src.find('=', len_at);
    if (eq == std::string_view::npos) bad("length without value", len_at);
    size_t k = eq + 1;
    while (k < src.size() && std::isspace(static_cast<unsigned char>(src[k]))) ++k;
    uint64_t n = 0;
    size_t digits = 0;
    for (; k < src.size() && std::isdigit(static_cast<unsigned char>(src[k])); ++k, ++digits) {
      n = n * 10 + static_cast<uint64_t>(src[k] - '0');
    }
    if (digits == 0) bad("length without value", eq);
    if (n != out.size()) bad("length does not match initializer", len_at);
  }
  return out;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIoError, "cannot read " + path);
  return bytes;
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
}

void write_text_file(const std::string& path, std::string_view text) {
  write_file(path, {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
}

}  // namespace noptc
