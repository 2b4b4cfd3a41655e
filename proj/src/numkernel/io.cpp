#include "nextdit/numkernel/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "nextdit/numkernel/error.hpp"

namespace nextdit::nk {
namespace {

constexpr std::array<char, 4> kTensorMagic{'N', 'K', 'T', '1'};
constexpr std::array<char, 4> kArchiveMagic{'N', 'K', 'A', '1'};

template <class U>
void put_le(std::ostream& out, U value) {
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    out.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(std::istream& in) {
    std::array<unsigned char, sizeof(U)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) throw std::runtime_error("nkt: truncated stream");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
    return value;
}

template <class T>
using bits_t = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

void expect_magic(std::istream& in, const std::array<char, 4>& magic) {
    std::array<char, 4> got{};
    in.read(got.data(), got.size());
    if (!in || got != magic) {
        throw std::runtime_error(std::string("nkt: bad magic, expected ") + std::string(magic.data(), magic.size()));
    }
}

template <class T>
BasicTensor<T> read_payload(std::istream& in, Shape shape) {
    BasicTensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = std::bit_cast<T>(get_le<bits_t<T>>(in));
    return t;
}

}  // namespace

template <class T>
void write_nkt(std::ostream& out, const BasicTensor<T>& t) {
    out.write(kTensorMagic.data(), kTensorMagic.size());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (T v : t.data()) put_le<bits_t<T>>(out, std::bit_cast<bits_t<T>>(v));
}

template void write_nkt(std::ostream&, const BasicTensor<float>&);
template void write_nkt(std::ostream&, const BasicTensor<double>&);

AnyTensor read_nkt(std::istream& in) {
    expect_magic(in, kTensorMagic);
    const auto tag = get_le<std::uint8_t>(in);
    const auto rank = get_le<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(in));
    switch (static_cast<DType>(tag)) {
        case DType::f32: return read_payload<float>(in, std::move(shape));
        case DType::f64: return read_payload<double>(in, std::move(shape));
    }
    throw std::runtime_error("nkt: unknown dtype tag " + std::to_string(tag));
}

Tensor read_nkt_f64(std::istream& in) {
    return std::visit(
        [](auto&& t) -> Tensor {
            if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Tensor>) {
                return std::move(t);
            } else {
                return t.template cast<double>();
            }
        },
        read_nkt(in));
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("nkt: cannot open " + path);
    write_nkt(out, t);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("nkt: cannot open " + path);
    return read_nkt_f64(in);
}

void write_archive(std::ostream& out, const std::vector<NamedTensor>& entries) {
    out.write(kArchiveMagic.data(), kArchiveMagic.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    }
    for (const auto& e : entries) write_nkt(out, e.tensor);
}

std::vector<NamedTensor> read_archive(std::istream& in) {
    expect_magic(in, kArchiveMagic);
    const auto count = get_le<std::uint32_t>(in);
    std::vector<NamedTensor> entries(count);
    for (auto& e : entries) {
        const auto len = get_le<std::uint32_t>(in);
        e.name.resize(len);
        in.read(e.name.data(), len);
        if (!in) throw std::runtime_error("nka: truncated manifest");
    }
    for (auto& e : entries) e.tensor = read_nkt_f64(in);
    return entries;
}

}  // namespace nextdit::nk
