#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "drsmt/autodiff.hpp"

// ============================================================================
// Versioned flat-text checkpoints: named tensors with shape headers plus
// free-form metadata. Values are written with 17 significant digits, which
// round-trips IEEE doubles exactly.
// ============================================================================

namespace drsmt {

class Checkpoint {
public:
    static constexpr const char* kMagic = "drsmt-checkpoint v1";

    void set_meta(const std::string& key, const std::string& value) {
        meta_.emplace_back(key, value);
    }

    bool has_meta(const std::string& key) const {
        for (const auto& [k, v] : meta_)
            if (k == key) return true;
        return false;
    }

    const std::string& meta(const std::string& key) const {
        for (const auto& [k, v] : meta_)
            if (k == key) return v;
        throw DataError("checkpoint: missing metadata key '" + key + "'");
    }

    const std::vector<std::pair<std::string, std::string>>& meta_entries() const { return meta_; }

    void add_tensor(const std::string& name, Tensor2 t) {
        tensors_.emplace_back(name, std::move(t));
    }

    const Tensor2& tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors_)
            if (n == name) return t;
        throw DataError("checkpoint: missing tensor '" + name + "'");
    }

    const std::vector<std::pair<std::string, Tensor2>>& tensors() const { return tensors_; }

    void add_params(const ParamSet& params) {
        for (const auto& p : params) add_tensor(p.name, p.value);
    }

    // Copies stored tensors into an existing parameter set by name.
    void restore_params(ParamSet& params, const std::string& file_hint = "") const {
        for (auto& p : params) {
            const Tensor2& t = tensor(p.name);
            if (!t.same_shape(p.value))
                throw DataError("checkpoint" + (file_hint.empty() ? "" : " '" + file_hint + "'") +
                                ": tensor '" + p.name + "' is " + t.shape_str() + ", expected " +
                                p.value.shape_str());
            p.value.v = t.v;
        }
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
        out << kMagic << "\n";
        for (const auto& [k, v] : meta_) out << "meta " << k << " " << v << "\n";
        char buf[32];
        for (const auto& [name, t] : tensors_) {
            out << "tensor " << name << " " << t.rows << " " << t.cols << "\n";
            for (std::size_t i = 0; i < t.rows; ++i) {
                for (std::size_t j = 0; j < t.cols; ++j) {
                    std::snprintf(buf, sizeof(buf), "%.17g", t(i, j));
                    out << (j ? " " : "") << buf;
                }
                out << "\n";
            }
        }
        out << "end\n";
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
        auto corrupt = [&](const std::string& why) {
            return DataError("checkpoint '" + path + "' is corrupt: " + why);
        };

        Checkpoint ck;
        std::string line;
        if (!std::getline(in, line) || line != kMagic) throw corrupt("bad magic line");

        bool terminated = false;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string tag;
            ls >> tag;
            if (tag == "end") {
                terminated = true;
                break;
            } else if (tag == "meta") {
                std::string key;
                ls >> key;
                std::string value;
                std::getline(ls, value);
                if (!value.empty() && value.front() == ' ') value.erase(0, 1);
                if (key.empty()) throw corrupt("meta line without key");
                ck.set_meta(key, value);
            } else if (tag == "tensor") {
                std::string name;
                std::size_t rows = 0, cols = 0;
                if (!(ls >> name >> rows >> cols)) throw corrupt("malformed tensor header");
                Tensor2 t(rows, cols);
                for (std::size_t i = 0; i < rows; ++i) {
                    if (!std::getline(in, line))
                        throw corrupt("tensor '" + name + "' truncated at row " +
                                      std::to_string(i));
                    std::istringstream rs(line);
                    for (std::size_t j = 0; j < cols; ++j)
                        if (!(rs >> t(i, j)))
                            throw corrupt("tensor '" + name + "' row " + std::to_string(i) +
                                          " has fewer than " + std::to_string(cols) + " values");
                }
                ck.add_tensor(name, std::move(t));
            } else {
                throw corrupt("unknown record '" + tag + "'");
            }
        }
        if (!terminated) throw corrupt("missing end marker");
        return ck;
    }

private:
    std::vector<std::pair<std::string, std::string>> meta_;
    std::vector<std::pair<std::string, Tensor2>> tensors_;
};

}  // namespace drsmt
