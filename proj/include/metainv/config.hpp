#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace metainv {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key=value configuration with '#' comments and namespaced keys
/// (geom.n_views, hqs.lambda0, train.lr, ...). CLI flags override file
/// values via set().
class Config {
  public:
    Config() = default;
    static Config from_file(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    /// Applies "key=value" override strings.
    void apply_overrides(const std::vector<std::string>& overrides);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::optional<double> get_optional_double(const std::string& key) const;

    /// Comma-separated list of doubles.
    std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const;
    std::vector<std::string> get_string_list(const std::string& key, const std::vector<std::string>& fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

} // namespace metainv
