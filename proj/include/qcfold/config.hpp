// Run configuration: "key = value" lines, '#' comments, typed against a single schema.
#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcfold {

inline constexpr int kConfigVersion = 1;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class KeyType { integer, real, text, boolean, int_list };

struct KeySpec {
    const char* key;
    KeyType type;
    const char* default_value;
    const char* doc;
};

inline const std::vector<KeySpec>& config_schema() {
    static const std::vector<KeySpec> s = {
        {"version", KeyType::integer, "1", "config grammar version"},
        {"seed", KeyType::integer, "20240611", "seed for every randomized check"},
        {"threads", KeyType::integer, "0", "worker cap (0: hardware); QCFOLD_THREADS caps further"},
        {"constants_file", KeyType::text, "", "certified constants file (empty: built-in data file)"},
        // disk maps
        {"disk.m", KeyType::integer, "100", "power m of the disk map"},
        {"disk.delta", KeyType::real, "0.01", "linear coefficient delta"},
        {"disk.w_re", KeyType::real, "0", "real part of the plateau translation w"},
        {"disk.w_im", KeyType::real, "0", "imaginary part of w"},
        {"disk.grid", KeyType::integer, "512", "polar grid size for the dilatation sup"},
        {"disk.fd_points", KeyType::integer, "1000", "random points for the closed-form vs finite-difference check"},
        {"disk.fd_tol", KeyType::real, "1e-4", "relative tolerance of that check"},
        {"disk.support_s", KeyType::real, "0.9", "radius below which the composed dilatation must vanish"},
        {"disk.max_dilatation", KeyType::real, "0.8", "bound on the dilatation sup"},
        // Beltrami solver
        {"beltrami.N", KeyType::integer, "1024", "grid size"},
        {"beltrami.half_width", KeyType::real, "1.5", "grid half width"},
        {"beltrami.k", KeyType::real, "0.3333333333333333", "radial oracle strength"},
        {"beltrami.r1", KeyType::real, "0", "inner radius of the oracle annulus"},
        {"beltrami.tol", KeyType::real, "1e-10", "Neumann iteration stopping tolerance"},
        {"beltrami.max_iter", KeyType::integer, "200", "Neumann iteration cap"},
        {"beltrami.oracle_tol", KeyType::real, "1e-3", "allowed sup error against the exact solution"},
        {"beltrami.snapshot", KeyType::boolean, "false", "write the solved map as a binary snapshot"},
        // budget
        {"lambda", KeyType::real, "20", "model parameter lambda"},
        {"budget.n_max", KeyType::integer, "20", "rows of the derivative budget table"},
        // construction
        {"mode", KeyType::text, "toy", "toy | strict"},
        {"levels", KeyType::integer, "3", "levels n_1..n_levels"},
        {"scan_horizon", KeyType::integer, "50", "indices scanned per level"},
        {"dist_override", KeyType::real, "0", "fixed dist_n (0: |z_{p_n}|/2)"},
        {"disp_grid", KeyType::integer, "512", "grid size of the displacement calibration sweep"},
        {"disp_ms", KeyType::int_list, "20,40,80", "degrees of the calibration sweep"},
        {"audit_ratio_threshold", KeyType::real, "10", "pass threshold of the univalence chain ratio"},
        {"boundary_samples", KeyType::integer, "256", "initial boundary samples for inclusion"},
        // render
        {"render.width", KeyType::integer, "400", "image width in pixels"},
        {"render.height", KeyType::integer, "300", "image height in pixels"},
        {"render.x0", KeyType::real, "-2", "left edge"},
        {"render.x1", KeyType::real, "14", "right edge"},
        {"render.y0", KeyType::real, "-6", "bottom edge"},
        {"render.y1", KeyType::real, "6", "top edge"},
        {"render.max_iter", KeyType::integer, "12", "iteration cap"},
        {"render.bailout", KeyType::real, "1e8", "escape modulus"},
        {"render.overlay", KeyType::boolean, "true", "draw strip boundary, disk circles and centres"},
    };
    return s;
}

inline std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r\n"));
    s.erase(s.find_last_not_of(" \t\r\n") + 1);
    return s;
}

inline const KeySpec* find_key(const std::string& key) {
    for (const auto& k : config_schema())
        if (key == k.key) return &k;
    return nullptr;
}

inline void check_value(const KeySpec& k, const std::string& v) {
    auto bad = [&] { throw ConfigError("bad value for " + std::string(k.key) + ": '" + v + "'"); };
    try {
        size_t pos = 0;
        switch (k.type) {
            case KeyType::integer:
                std::stoll(v, &pos);
                if (pos != v.size()) bad();
                break;
            case KeyType::real:
                std::stod(v, &pos);
                if (pos != v.size()) bad();
                break;
            case KeyType::boolean:
                if (v != "true" && v != "false") bad();
                break;
            case KeyType::int_list: {
                std::stringstream ss(v);
                std::string item;
                int count = 0;
                while (std::getline(ss, item, ',')) {
                    item = trim(item);
                    std::stoll(item, &pos);
                    if (pos != item.size()) bad();
                    ++count;
                }
                if (count == 0) bad();
                break;
            }
            case KeyType::text:
                break;
        }
    } catch (const std::logic_error&) {
        bad();
    }
}

class RunConfig {
public:
    RunConfig() {
        for (const auto& k : config_schema()) values_[k.key] = k.default_value;
    }

    void set(const std::string& key, const std::string& value) {
        const KeySpec* k = find_key(key);
        if (!k) throw ConfigError("unknown key: " + key);
        std::string v = trim(value);
        check_value(*k, v);
        if (key == "version" && std::stoi(v) != kConfigVersion)
            throw ConfigError("unsupported config version " + v);
        if (key == "mode" && v != "toy" && v != "strict") throw ConfigError("mode must be toy or strict");
        values_[key] = v;
    }

    // "key=value"
    void set_override(const std::string& kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
        set(trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }

    void parse(std::istream& in) {
        std::string line;
        int no = 0;
        while (std::getline(in, line)) {
            ++no;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            line = trim(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected key = value");
            try {
                set(trim(line.substr(0, eq)), line.substr(eq + 1));
            } catch (const ConfigError& e) {
                throw ConfigError("line " + std::to_string(no) + ": " + e.what());
            }
        }
    }

    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path);
        parse(in);
    }

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown key: " + key);
        return it->second;
    }
    long long integer(const std::string& key) const { return std::stoll(str(key)); }
    double real(const std::string& key) const { return std::stod(str(key)); }
    bool boolean(const std::string& key) const { return str(key) == "true"; }
    std::vector<long long> int_list(const std::string& key) const {
        std::vector<long long> out;
        std::stringstream ss(str(key));
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(std::stoll(trim(item)));
        return out;
    }

    // effective values in schema order
    std::string dump() const {
        std::ostringstream os;
        for (const auto& k : config_schema()) os << k.key << " = " << values_.at(k.key) << "\n";
        return os.str();
    }

private:
    std::map<std::string, std::string> values_;
};

inline std::string config_reference() {
    std::ostringstream os;
    os << "# qcfold configuration reference (grammar version " << kConfigVersion << ")\n\n"
       << "One `key = value` per line; `#` starts a comment; unknown keys are errors.\n"
       << "Command-line `--set key=value` overrides are applied after the file.\n\n"
       << "| key | type | default | meaning |\n|---|---|---|---|\n";
    const char* names[] = {"integer", "real", "text", "boolean", "integer list"};
    for (const auto& k : config_schema())
        os << "| `" << k.key << "` | " << names[int(k.type)] << " | `" << k.default_value << "` | " << k.doc << " |\n";
    return os.str();
}

}  // namespace qcfold
