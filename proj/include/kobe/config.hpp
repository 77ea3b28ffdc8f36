#pragma once
// Flat "key = value" run configuration with typed access, plus the manifest
// every artifact-writing command drops beside its outputs. Precedence is the
// caller's job: command-line flags beat file values beat built-in defaults.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "kobe/errors.hpp"

namespace kobe {

// Lines of `key = value`; full-line # comments and blank lines are ignored;
// the value keeps any further '=' characters. Duplicate keys are rejected —
// silent last-wins would hide typos in hand-edited files.
class ConfigFile {
  public:
    ConfigFile() = default;
    static ConfigFile parse(const std::string& text);
    static ConfigFile load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;  // true/false/on/off/1/0

    // Rejects keys outside the allowed set, so a misspelled key fails loudly
    // instead of silently falling back to a default.
    void require_known(const std::vector<std::string>& allowed) const;

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

// What ran, with what settings, reading and writing which files. Serialized
// as run-manifest.json beside the command's outputs; wall time and version
// are informational and exempt from the byte-identical-outputs guarantee.
struct RunManifest {
    std::string command;
    uint64_t seed = 0;
    nlohmann::ordered_json config;  // effective settings after precedence
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string version;
    double wall_seconds = 0.0;
};

// `git describe --always --dirty` of the working tree, or "unknown" outside
// a checkout.
std::string version_string();

nlohmann::ordered_json manifest_json(const RunManifest& m);
void write_manifest(const std::string& dir, const RunManifest& m);

// Worker-count cap from the KOBE_THREADS environment variable, clamped to at
// least 1; unset or unparsable means 1. Every pipeline stage is sequential
// today, so this is a cap honored by construction, not a parallelism switch.
int max_threads();

}  // namespace kobe
