// Copyright 2026 The rsnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RSNN_SURROGATE_HPP_
#define RSNN_SURROGATE_HPP_

#include <string>
#include <string_view>

namespace rsnn {

enum class SurrogateFamily { piecewise_linear, exponential, rectangular, ste, bptr, conversion_approx };

/// Backward rule standing in for dH/dv of the spike function. a is gamma_w
/// (pcw, rect) or gamma_d (exp); b is gamma_s (exp only).
struct SurrogateSpec {
  SurrogateFamily family = SurrogateFamily::piecewise_linear;
  float a = 1.0f;
  float b = 0.0f;

  static SurrogateSpec pcw(float gamma_w) { return {SurrogateFamily::piecewise_linear, gamma_w, 0.0f}; }
  static SurrogateSpec exp(float gamma_d, float gamma_s) { return {SurrogateFamily::exponential, gamma_d, gamma_s}; }
  static SurrogateSpec rect(float gamma_w) { return {SurrogateFamily::rectangular, gamma_w, 0.0f}; }
  static SurrogateSpec ste() { return {SurrogateFamily::ste, 0.0f, 0.0f}; }
  static SurrogateSpec bptr() { return {SurrogateFamily::bptr, 0.0f, 0.0f}; }
  static SurrogateSpec conversion() { return {SurrogateFamily::conversion_approx, 0.0f, 0.0f}; }

  /// Elementwise families: pcw, exp, rect, ste.
  bool elementwise() const;
  /// Throws std::invalid_argument on non-positive gammas.
  void validate() const;
  /// "pcw:1", "exp:0.3:2", "rect:0.5", "ste", "bptr", "conversion".
  std::string name() const;
  bool operator==(const SurrogateSpec&) const = default;
};

SurrogateSpec parse_surrogate(std::string_view s);

/// d o / d v^- at distance v_minus - vth; elementwise families only.
float surrogate_grad(const SurrogateSpec& spec, float v_minus, float vth);

}  // namespace rsnn

#endif  // RSNN_SURROGATE_HPP_
