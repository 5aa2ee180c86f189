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

#ifndef NOPTC_SERDES_H_
#define NOPTC_SERDES_H_

// The .topt container. Byte layout is documented in docs/format.md.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noptc/graph.h"

namespace noptc {

inline constexpr char kMagic[4] = {'T', 'O', 'P', 'T'};
inline constexpr uint16_t kFormatVersion = 1;
inline constexpr uint64_t kHeaderBytes = 16;
inline constexpr uint64_t kSectionEntryBytes = 24;

enum class FileKind : uint16_t { kModel = 0, kCheckpoint = 1 };

enum class SectionId : uint32_t {
  kStrings = 1,
  kTensors = 2,
  kQuant = 3,
  kConstants = 4,
  kNodes = 5,
  kIo = 6,
  kSubgraphs = 7,
  kPayload = 8,
  kMoments = 9,
};

struct ModelBinary {
  std::vector<uint8_t> bytes;
  // Constant (and moment) payload bytes, alignment padding excluded.
  int64_t payload_bytes = 0;

  int64_t size() const { return static_cast<int64_t>(bytes.size()); }
};

ModelBinary serialize(const Graph& graph);

// Accepts model and checkpoint files (moments are ignored). Throws BadMagic,
// UnsupportedVersion, TruncatedSection, OffsetOutOfBounds, UnknownSection or
// MalformedRecord, each carrying the failing byte offset.
Graph deserialize(std::span<const uint8_t> bytes);

// First and second optimizer moments of one trainable tensor.
struct Moments {
  std::vector<float> first;
  std::vector<float> second;
};
using MomentMap = std::map<TensorId, Moments>;

struct Checkpoint {
  Graph graph;
  MomentMap moments;
};

// Training checkpoint: every float32 constant is stored with two float32
// moment arrays (zeros when `moments` has no entry), 12 bytes per parameter.
ModelBinary serialize_checkpoint(const Graph& graph, const MomentMap& moments = {});
Checkpoint deserialize_checkpoint(std::span<const uint8_t> bytes);

FileKind file_kind(std::span<const uint8_t> bytes);

// The bytes of a constant inside a serialized model, without copying.
std::optional<std::span<const uint8_t>> constant_payload_view(std::span<const uint8_t> bytes,
                                                              TensorId tensor);

// `const unsigned char <symbol>[] = {...};` with 12 lowercase hex bytes per
// line, then `const unsigned int <symbol>_len = N;`. Throws InvalidIdentifier.
std::string emit_c_array(std::span<const uint8_t> bytes, std::string_view symbol);
// Inverse of emit_c_array; throws MalformedRecord.
std::vector<uint8_t> parse_c_array(std::string_view source);
bool is_c_identifier(std::string_view symbol);

// Throw IoError.
std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace noptc

#endif  // NOPTC_SERDES_H_
