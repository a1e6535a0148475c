#pragma once

#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

#include "corrfair/fsutil.hpp"
#include "corrfair/hashing.hpp"

namespace corrfair {

// Content-addressed response cache: one file per key, atomic writes.
class DiskCache {
  public:
    explicit DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    // Length-framed so no two part lists collide on concatenation.
    static std::string key_of(std::initializer_list<std::string_view> parts) {
        std::string framed;
        for (std::string_view p : parts) {
            framed += std::to_string(p.size());
            framed += ':';
            framed += p;
        }
        return hashing::content_key(framed);
    }

    std::optional<std::string> get(const std::string& key) const {
        const auto path = dir_ / key;
        if (!std::filesystem::exists(path)) return std::nullopt;
        return fsutil::read_file(path);
    }

    void put(const std::string& key, std::string_view value) const {
        fsutil::write_file_atomic(dir_ / key, value);
    }

    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path dir_;
};

}  // namespace corrfair
