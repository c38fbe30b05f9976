// Checkpoint file format: a human-readable manifest header (config, per-layer
// shapes, one line per tensor with shape/dtype/offset) followed by a raw
// little-endian float32 blob. Roundtrip is bit-exact at 32-bit precision.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "slmkit/toylm.hpp"

namespace slmkit::ckpt {

inline constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blob is little-endian; big-endian hosts are unsupported");

inline void save_checkpoint(const toylm::ToyModel& model, const std::string& path) {
    std::ostringstream manifest;
    manifest << "slmkit-checkpoint " << kFormatVersion << "\n";
    const toylm::ModelConfig& c = model.config;
    manifest << "config " << c.vocab_size << " " << c.d_model << " " << c.n_layers << " " << c.n_heads
             << " " << c.head_dim << " " << c.d_intermediate << " " << c.max_seq_len << " "
             << std::setprecision(17) << c.norm_eps << "\n";
    manifest << "layer_shapes";
    for (const auto& ls : model.layer_shapes) manifest << " " << ls.n_heads << ":" << ls.d_intermediate;
    manifest << "\n";
    manifest << "act_quant "
             << (model.act_quant == toylm::ToyModel::ActQuant::none
                     ? "none"
                     : model.act_quant == toylm::ToyModel::ActQuant::int8_dynamic ? "int8_dynamic" : "fp8")
             << "\n";

    std::vector<float> blob;
    std::size_t n_tensors = 0;
    toylm::visit_tensors(model.t, [&](const std::string&, const DenseMatrix&) { ++n_tensors; });
    manifest << "tensors " << n_tensors << "\n";
    toylm::visit_tensors(model.t, [&](const std::string& name, const DenseMatrix& t) {
        manifest << "tensor " << name << " " << t.rows() << " " << t.cols() << " f32 "
                 << blob.size() * sizeof(float) << "\n";
        for (double v : t.raw()) blob.push_back(static_cast<float>(v));
    });
    manifest << "blob " << blob.size() * sizeof(float) << "\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    const std::string header = manifest.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline toylm::ToyModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);

    auto next_line = [&]() {
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error("load_checkpoint: truncated manifest");
        return line;
    };

    {
        std::istringstream ls(next_line());
        std::string magic;
        int version = -1;
        ls >> magic >> version;
        if (magic != "slmkit-checkpoint") throw std::runtime_error("load_checkpoint: bad magic");
        if (version != kFormatVersion) {
            throw std::runtime_error("load_checkpoint: format version " + std::to_string(version) +
                                     " unsupported (expected " + std::to_string(kFormatVersion) + ")");
        }
    }

    toylm::ToyModel model;
    {
        std::istringstream ls(next_line());
        std::string key;
        toylm::ModelConfig& c = model.config;
        ls >> key >> c.vocab_size >> c.d_model >> c.n_layers >> c.n_heads >> c.head_dim >>
            c.d_intermediate >> c.max_seq_len >> c.norm_eps;
        if (key != "config" || !ls) throw std::runtime_error("load_checkpoint: malformed config line");
        c.validate();
    }
    {
        std::istringstream ls(next_line());
        std::string key;
        ls >> key;
        if (key != "layer_shapes") throw std::runtime_error("load_checkpoint: malformed layer_shapes line");
        std::string tok;
        while (ls >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) throw std::runtime_error("load_checkpoint: bad layer shape " + tok);
            toylm::LayerShape s;
            s.n_heads = std::stoul(tok.substr(0, colon));
            s.d_intermediate = std::stoul(tok.substr(colon + 1));
            model.layer_shapes.push_back(s);
        }
        if (model.layer_shapes.size() != model.config.n_layers) {
            throw std::runtime_error("load_checkpoint: layer_shapes count != n_layers");
        }
    }
    {
        std::istringstream ls(next_line());
        std::string key, mode;
        ls >> key >> mode;
        if (key != "act_quant") throw std::runtime_error("load_checkpoint: malformed act_quant line");
        if (mode == "none") model.act_quant = toylm::ToyModel::ActQuant::none;
        else if (mode == "int8_dynamic") model.act_quant = toylm::ToyModel::ActQuant::int8_dynamic;
        else if (mode == "fp8") model.act_quant = toylm::ToyModel::ActQuant::fp8;
        else throw std::runtime_error("load_checkpoint: unknown act_quant mode " + mode);
    }

    std::size_t n_tensors = 0;
    {
        std::istringstream ls(next_line());
        std::string key;
        ls >> key >> n_tensors;
        if (key != "tensors" || !ls) throw std::runtime_error("load_checkpoint: malformed tensors line");
    }

    struct Entry {
        std::string name;
        std::size_t rows = 0, cols = 0, offset = 0;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < n_tensors; ++i) {
        std::istringstream ls(next_line());
        std::string key, dtype;
        Entry e;
        ls >> key >> e.name >> e.rows >> e.cols >> dtype >> e.offset;
        if (key != "tensor" || !ls) throw std::runtime_error("load_checkpoint: malformed tensor line");
        if (dtype != "f32") throw std::runtime_error("load_checkpoint: unsupported dtype " + dtype);
        entries.push_back(std::move(e));
    }

    std::size_t blob_bytes = 0;
    {
        std::istringstream ls(next_line());
        std::string key;
        ls >> key >> blob_bytes;
        if (key != "blob" || !ls) throw std::runtime_error("load_checkpoint: malformed blob line");
    }

    std::vector<char> blob(blob_bytes);
    in.read(blob.data(), static_cast<std::streamsize>(blob_bytes));
    if (static_cast<std::size_t>(in.gcount()) != blob_bytes) {
        // name the first tensor whose data falls past the actual end
        const std::size_t have = static_cast<std::size_t>(in.gcount());
        for (const Entry& e : entries) {
            if (e.offset + e.rows * e.cols * sizeof(float) > have) {
                throw std::runtime_error("load_checkpoint: blob truncated, tensor " + e.name +
                                         " out of bounds");
            }
        }
        throw std::runtime_error("load_checkpoint: blob truncated");
    }

    // expected shapes come from the config and per-layer shape table
    model.t.layers.resize(model.config.n_layers);
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> expected;
    {
        const toylm::ModelConfig& c = model.config;
        expected.emplace_back("token_embedding", std::make_pair(c.vocab_size, c.d_model));
        expected.emplace_back("positional_embedding", std::make_pair(c.max_seq_len, c.d_model));
        for (std::size_t l = 0; l < c.n_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            const std::size_t aw = model.layer_shapes[l].n_heads * c.head_dim;
            const std::size_t di = model.layer_shapes[l].d_intermediate;
            expected.emplace_back(p + "attn_q", std::make_pair(c.d_model, aw));
            expected.emplace_back(p + "attn_k", std::make_pair(c.d_model, aw));
            expected.emplace_back(p + "attn_v", std::make_pair(c.d_model, aw));
            expected.emplace_back(p + "attn_o", std::make_pair(aw, c.d_model));
            expected.emplace_back(p + "mlp_gate", std::make_pair(c.d_model, di));
            expected.emplace_back(p + "mlp_up", std::make_pair(c.d_model, di));
            expected.emplace_back(p + "mlp_down", std::make_pair(di, c.d_model));
            expected.emplace_back(p + "norm1", std::make_pair(std::size_t{1}, c.d_model));
            expected.emplace_back(p + "norm2", std::make_pair(std::size_t{1}, c.d_model));
        }
        expected.emplace_back("final_norm", std::make_pair(std::size_t{1}, c.d_model));
        expected.emplace_back("unembedding", std::make_pair(c.d_model, c.vocab_size));
    }
    if (entries.size() != expected.size()) {
        throw std::runtime_error("load_checkpoint: manifest lists " + std::to_string(entries.size()) +
                                 " tensors, model needs " + std::to_string(expected.size()));
    }

    std::map<std::string, DenseMatrix> loaded;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Entry& e = entries[i];
        const auto& [ename, eshape] = expected[i];
        if (e.name != ename) throw std::runtime_error("load_checkpoint: unexpected tensor " + e.name);
        if (e.rows != eshape.first || e.cols != eshape.second) {
            throw std::runtime_error("load_checkpoint: shape mismatch for " + e.name + " (" +
                                     std::to_string(e.rows) + "x" + std::to_string(e.cols) + ", expected " +
                                     std::to_string(eshape.first) + "x" + std::to_string(eshape.second) + ")");
        }
        const std::size_t bytes = e.rows * e.cols * sizeof(float);
        if (e.offset + bytes > blob_bytes) {
            throw std::runtime_error("load_checkpoint: blob truncated, tensor " + e.name + " out of bounds");
        }
        DenseMatrix m(e.rows, e.cols);
        for (std::size_t j = 0; j < m.size(); ++j) {
            float f;
            std::memcpy(&f, blob.data() + e.offset + j * sizeof(float), sizeof(float));
            m.raw()[j] = static_cast<double>(f);
        }
        loaded.emplace(e.name, std::move(m));
    }

    toylm::visit_tensors(model.t, [&](const std::string& name, DenseMatrix& t) { t = loaded.at(name); });
    return model;
}

}  // namespace slmkit::ckpt
