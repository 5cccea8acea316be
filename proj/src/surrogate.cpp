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

#include "rsnn/surrogate.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace rsnn {

bool SurrogateSpec::elementwise() const {
  return family == SurrogateFamily::piecewise_linear || family == SurrogateFamily::exponential ||
         family == SurrogateFamily::rectangular || family == SurrogateFamily::ste;
}

void SurrogateSpec::validate() const {
  switch (family) {
    case SurrogateFamily::piecewise_linear:
    case SurrogateFamily::rectangular:
      if (!(a > 0.0f) || !std::isfinite(a)) throw std::invalid_argument("surrogate gamma_w must be > 0");
      break;
    case SurrogateFamily::exponential:
      if (!(a > 0.0f) || !(b > 0.0f) || !std::isfinite(a) || !std::isfinite(b)) {
        throw std::invalid_argument("surrogate gamma_d and gamma_s must be > 0");
      }
      break;
    default: break;
  }
}

std::string SurrogateSpec::name() const {
  std::ostringstream os;
  switch (family) {
    case SurrogateFamily::piecewise_linear: os << "pcw:" << a; break;
    case SurrogateFamily::exponential: os << "exp:" << a << ':' << b; break;
    case SurrogateFamily::rectangular: os << "rect:" << a; break;
    case SurrogateFamily::ste: os << "ste"; break;
    case SurrogateFamily::bptr: os << "bptr"; break;
    case SurrogateFamily::conversion_approx: os << "conversion"; break;
  }
  return os.str();
}

SurrogateSpec parse_surrogate(std::string_view s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  auto num = [&](std::size_t i) {
    if (i >= parts.size()) throw std::invalid_argument("surrogate '" + std::string(s) + "' is missing a parameter");
    try {
      return std::stof(parts[i]);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad surrogate parameter in '" + std::string(s) + "'");
    }
  };
  SurrogateSpec spec;
  const std::string& f = parts[0];
  std::size_t want = 1;
  if (f == "pcw") {
    spec = SurrogateSpec::pcw(num(1));
    want = 2;
  } else if (f == "exp") {
    spec = SurrogateSpec::exp(num(1), num(2));
    want = 3;
  } else if (f == "rect") {
    spec = SurrogateSpec::rect(num(1));
    want = 2;
  } else if (f == "ste") {
    spec = SurrogateSpec::ste();
  } else if (f == "bptr") {
    spec = SurrogateSpec::bptr();
  } else if (f == "conversion") {
    spec = SurrogateSpec::conversion();
  } else {
    throw std::invalid_argument("unknown surrogate family '" + f + "'");
  }
  if (parts.size() != want) throw std::invalid_argument("wrong parameter count in surrogate '" + std::string(s) + "'");
  spec.validate();
  return spec;
}

float surrogate_grad(const SurrogateSpec& spec, float v_minus, float vth) {
  const float d = std::fabs(v_minus - vth);
  switch (spec.family) {
    case SurrogateFamily::piecewise_linear:
      return std::max(0.0f, spec.a - d) / (spec.a * spec.a);
    case SurrogateFamily::exponential:
      return spec.a * std::exp(-spec.b * d);
    case SurrogateFamily::rectangular:
      return d < 0.5f * spec.a ? 1.0f / spec.a : 0.0f;
    case SurrogateFamily::ste:
      return 1.0f;
    default:
      throw std::invalid_argument("surrogate " + spec.name() + " has no elementwise derivative");
  }
}

}  // namespace rsnn
