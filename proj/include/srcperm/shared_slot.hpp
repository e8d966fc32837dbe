// Copyright 2026 The srcperm Authors
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

#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <utility>

namespace srcperm {

/// Single-writer, multi-reader slot holding an immutable value.
///
/// Readers get a complete value together with its version; versions
/// observed by one reader never decrease.
template <typename T>
class SharedSlot {
 public:
  struct Read {
    std::shared_ptr<const T> value;
    std::uint64_t version = 0;
  };

  SharedSlot() = default;
  explicit SharedSlot(T initial) { write(std::move(initial)); }

  /// Publishes `value` and returns its version.
  std::uint64_t write(T value) {
    auto ptr = std::make_shared<const T>(std::move(value));
    std::lock_guard lock(mu_);
    current_ = std::move(ptr);
    return ++version_;
  }

  std::uint64_t write(std::shared_ptr<const T> value) {
    std::lock_guard lock(mu_);
    current_ = std::move(value);
    return ++version_;
  }

  Read read() const {
    std::lock_guard lock(mu_);
    return {current_, version_};
  }

  std::uint64_t version() const {
    std::lock_guard lock(mu_);
    return version_;
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const T> current_;
  std::uint64_t version_ = 0;
};

}  // namespace srcperm
