/*
 * Copyright 2026 The attnpred Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace attnpred {

/// Flat `key = value` configuration. `#` starts a comment; lists are
/// comma-separated. Every error names the offending key and, when the value
/// came from a file, its line number.
class KvConfig {
 public:
  static KvConfig parse(std::istream& in, const std::string& source = "<config>");
  static KvConfig load(const std::filesystem::path& path);

  /// Command-line overrides win over file values.
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return entries_.contains(key); }
  std::vector<std::string> keys() const;

  /// Throws ConfigError on the first key not in `known`.
  void require_known(const std::set<std::string>& known) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         const std::vector<std::int64_t>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

 private:
  struct Entry {
    std::string value;
    int line = 0;  // 0 when set programmatically
  };
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;

  std::string source_;
  std::map<std::string, Entry> entries_;
};

}  // namespace attnpred
