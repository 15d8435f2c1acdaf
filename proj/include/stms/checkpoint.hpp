#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stms/tensor.hpp"

namespace stms {

// On-disk snapshot: a key=value config block plus named f64 tensors.
// The binary layout is versioned and byte-order-pinned (little endian),
// so save -> load round trips are bit-exact.
struct Checkpoint {
    std::map<std::string, std::string> config;
    std::vector<std::pair<std::string, Tensor>> tensors;

    // nullptr when absent
    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);

// Throws std::runtime_error on missing file, bad magic, unsupported
// version, or a truncated/corrupt payload.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stms
