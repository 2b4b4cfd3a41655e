#pragma once

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "nextdit/numkernel/tensor.hpp"

namespace nextdit::nk {

// NKT1 tensor container:
//   "NKT1" | u8 dtype (0=f32, 1=f64) | u32 rank | u64 dims[rank] | little-endian data
using AnyTensor = std::variant<TensorF, Tensor>;

template <class T>
void write_nkt(std::ostream& out, const BasicTensor<T>& t);
AnyTensor read_nkt(std::istream& in);
// Reads either dtype and widens to f64.
Tensor read_nkt_f64(std::istream& in);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// NKA1 archive: "NKA1" | u32 count | manifest (u32 len + name bytes, repeated) | NKT1 blobs in manifest order.
void write_archive(std::ostream& out, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_archive(std::istream& in);

}  // namespace nextdit::nk
