// Pair manifests: directory scanning, deterministic splits, JSON persistence.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusenet/common.hpp"

namespace fusenet {

enum class Split { unassigned, train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        default: return "unassigned";
    }
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    if (s == "unassigned") return Split::unassigned;
    throw FormatError("unknown split name '" + s + "'");
}

struct PairEntry {
    std::string id;
    std::string path_a;
    std::string path_b;
    Split split = Split::unassigned;
};

struct PairManifest {
    std::uint64_t seed = 0;
    std::vector<PairEntry> entries;

    std::vector<const PairEntry*> in_split(Split s) const {
        std::vector<const PairEntry*> out;
        for (const auto& e : entries)
            if (e.split == s) out.push_back(&e);
        return out;
    }

    std::size_t count(Split s) const { return in_split(s).size(); }

    void validate() const {
        std::map<std::string, int> seen;
        for (const auto& e : entries) {
            if (++seen[e.id] > 1) throw ValidationError("pair id '" + e.id + "' appears more than once");
        }
    }
};

/// Pairs are matched by identical filename stem under <root>/a and <root>/b.
/// Entries come back sorted by stem with unassigned splits.
inline PairManifest scan_pairs(const std::string& root) {
    namespace fs = std::filesystem;
    const fs::path dir_a = fs::path(root) / "a";
    const fs::path dir_b = fs::path(root) / "b";
    if (!fs::is_directory(dir_a) || !fs::is_directory(dir_b)) {
        throw IoError("data root '" + root + "' must contain a/ and b/ directories");
    }
    std::map<std::string, fs::path> stems_b;
    for (const auto& e : fs::directory_iterator(dir_b)) {
        if (e.path().extension() == ".png") stems_b[e.path().stem().string()] = e.path();
    }
    PairManifest m;
    std::vector<std::pair<std::string, fs::path>> stems_a;
    for (const auto& e : fs::directory_iterator(dir_a)) {
        if (e.path().extension() == ".png") stems_a.emplace_back(e.path().stem().string(), e.path());
    }
    std::sort(stems_a.begin(), stems_a.end());
    for (const auto& [stem, path] : stems_a) {
        auto it = stems_b.find(stem);
        if (it == stems_b.end()) continue;
        m.entries.push_back({stem, path.string(), it->second.string(), Split::unassigned});
    }
    if (m.entries.empty()) throw ValidationError("no matching pair stems under '" + root + "'");
    return m;
}

/// Deterministic split assignment: a seeded Fisher-Yates shuffle takes
/// n_test pairs for testing; the remainder goes floor(remainder * (1 -
/// val_fraction)) to training and the rest to validation.
inline PairManifest make_splits(const PairManifest& manifest, std::size_t n_test, double val_fraction,
                                std::uint64_t seed) {
    manifest.validate();
    const std::size_t total = manifest.entries.size();
    if (n_test >= total) {
        throw ValidationError("n_test " + std::to_string(n_test) + " must be smaller than the " +
                              std::to_string(total) + " available pairs");
    }
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ValidationError("val_fraction must lie strictly between 0 and 1");
    }

    PairManifest out = manifest;
    out.seed = seed;
    std::sort(out.entries.begin(), out.entries.end(),
              [](const PairEntry& a, const PairEntry& b) { return a.id < b.id; });

    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const std::size_t remainder = total - n_test;
    const std::size_t n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(remainder) * (1.0 - val_fraction)));
    for (std::size_t i = 0; i < total; ++i) {
        Split s = Split::val;
        if (i < n_test) {
            s = Split::test;
        } else if (i < n_test + n_train) {
            s = Split::train;
        }
        out.entries[order[i]].split = s;
    }
    return out;
}

inline void save_manifest(const PairManifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["seed"] = manifest.seed;
    j["entries"] = nlohmann::json::array();
    for (const auto& e : manifest.entries) {
        j["entries"].push_back({{"id", e.id}, {"a", e.path_a}, {"b", e.path_b}, {"split", split_name(e.split)}});
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest '" + path + "'");
    out << j.dump(2) << '\n';
}

inline PairManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read manifest '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest '" + path + "' is not valid JSON: " + e.what());
    }
    PairManifest m;
    try {
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& e : j.at("entries")) {
            m.entries.push_back({e.at("id").get<std::string>(), e.at("a").get<std::string>(),
                                 e.at("b").get<std::string>(), split_from_name(e.at("split").get<std::string>())});
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest '" + path + "' has unexpected structure: " + e.what());
    }
    m.validate();
    return m;
}

}  // namespace fusenet
