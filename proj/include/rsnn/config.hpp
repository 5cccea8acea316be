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

#ifndef RSNN_CONFIG_HPP_
#define RSNN_CONFIG_HPP_

#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rsnn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` settings; '#' starts a comment, blank lines are
/// ignored, later assignments win.
class Config {
 public:
  static Config parse(std::string_view text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// Parses "key=value".
  void set_assignment(std::string_view assignment);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  /// Throws ConfigError naming the key when absent.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int_or(const std::string& key, long long fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  bool get_bool_or(const std::string& key, bool fallback) const;

  /// Overrides known keys from PREFIX + upper-case key (e.g. RSNN_EPOCHS).
  void apply_env(const std::set<std::string>& known, const std::string& prefix = "RSNN_");
  /// Rejects keys outside `known`, naming the first offender.
  void check_known(const std::set<std::string>& known) const;
  /// Rejects when any of `required` is absent, naming the first one.
  void require(const std::set<std::string>& required) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::string source_ = "<config>";
  std::map<std::string, std::string> values_;
};

std::string env_name(const std::string& key, const std::string& prefix = "RSNN_");

}  // namespace rsnn

#endif  // RSNN_CONFIG_HPP_
