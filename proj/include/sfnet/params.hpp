#pragma once

#include <map>
#include <string>

#include "sfnet/tensor.hpp"

namespace sfnet {

/// Named parameter tensors plus BN running statistics. Running statistics are
/// stored under the ".running_mean"/".running_var" suffixes; they ride along in
/// checkpoints but are not learnable (the optimizer skips them).
struct ParamStore {
    std::map<std::string, Tensor> entries;  // ordered: serialization is canonical

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return entries.count(name) != 0; }
    void put(const std::string& name, Tensor t) { entries[name] = std::move(t); }

    static bool is_running_stat(const std::string& name);
    /// BN scale/shift and biases; exempt from weight decay by default.
    static bool is_affine_or_bias(const std::string& name);

    int64_t learnable_count() const;
};

// Little-endian binary checkpoint. Header: magic "SFCK", version u32, entry
// count u32. Per entry: name length u32, UTF-8 name, rank u32, extents u64[],
// raw f64 payload. Entries are written in name order.
void save_checkpoint(const std::string& path, const ParamStore& store);
ParamStore load_checkpoint(const std::string& path);

}  // namespace sfnet
