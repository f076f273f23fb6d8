#pragma once

#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>

#include <json.hpp>

#include "pairdis/error.hpp"

namespace pairdis {

// Typed access to a JSON object with config-error messages that name the
// exact key path ("train.loss.lambda1: expected number").
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), ErrorKind::config_error, path_ + ": expected object");
  }

  const std::string& path() const noexcept { return path_; }
  bool has(std::string_view key) const { return j_.contains(key); }

  std::string key_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  template <typename T>
  T get(std::string_view key, T fallback) const {
    if (!j_.contains(key)) return fallback;
    return convert<T>(j_.at(std::string(key)), key_path(key));
  }

  template <typename T>
  T require_key(std::string_view key) const {
    require(j_.contains(key), ErrorKind::config_error, key_path(key) + ": required key missing");
    return convert<T>(j_.at(std::string(key)), key_path(key));
  }

  ConfigReader child(std::string_view key) const {
    static const nlohmann::json empty = nlohmann::json::object();
    if (!j_.contains(key)) return ConfigReader(empty, key_path(key));
    return ConfigReader(j_.at(std::string(key)), key_path(key));
  }

  void allow_only(std::initializer_list<std::string_view> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (std::string_view k : keys) known = known || it.key() == k;
      require(known, ErrorKind::config_error, key_path(it.key()) + ": unknown key");
    }
  }

  template <typename T>
  static T convert(const nlohmann::json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      require(v.is_boolean(), ErrorKind::config_error, path + ": expected boolean");
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), ErrorKind::config_error,
              path + ": expected non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      require(v.is_number_integer(), ErrorKind::config_error, path + ": expected integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      require(v.is_number(), ErrorKind::config_error, path + ": expected number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      require(v.is_string(), ErrorKind::config_error, path + ": expected string");
    }
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::config_error, path + ": " + e.what());
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
};

}  // namespace pairdis
