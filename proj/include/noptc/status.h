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

#ifndef NOPTC_STATUS_H_
#define NOPTC_STATUS_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace noptc {

enum class ErrorCode {
  // graph_ir
  kCycleDetected,
  kDanglingTensor,
  kShapeMismatch,
  kDTypeMismatch,
  kInvalidNode,
  // interpreter
  kMissingInput,
  kNumericOverflow,
  kUnsupportedOp,
  kAccumulatorOverflow,
  // rewriting
  kIterationLimit,
  kNotFusable,
  kRankTooLow,
  kConvergenceFailure,
  // quantization and training
  kCodeOutOfRange,
  kNonFiniteWeight,
  kUnsupportedOpForInt8,
  kMissingCalibration,
  kUnsupportedLayerForTraining,
  // serdes
  kBadMagic,
  kUnsupportedVersion,
  kTruncatedSection,
  kOffsetOutOfBounds,
  kUnknownSection,
  kMalformedRecord,
  kInvalidIdentifier,
  // pipeline / cli
  kInvalidPresetName,
  kSignatureMismatch,
  kInvalidSpec,
  kUnknownRule,
  kInvalidArgument,
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

// The single exception type thrown by the library. Serialization errors also
// carry the byte offset at which decoding failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<uint64_t> offset = std::nullopt)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        offset_(offset) {}

  ErrorCode code() const { return code_; }
  std::optional<uint64_t> offset() const { return offset_; }

 private:
  ErrorCode code_;
  std::optional<uint64_t> offset_;
};

}  // namespace noptc

#endif  // NOPTC_STATUS_H_
