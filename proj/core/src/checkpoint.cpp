#include "pen/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "pen/binary_io.hpp"

namespace pen {

template <typename T>
Parameter<T>& ParameterSet<T>::add(std::string name, Tensor<T> value)
{
    if (find(name) != nullptr) {
        throw Error("duplicate parameter name: " + name);
    }
    return params_.emplace_back(std::move(name), std::move(value));
}

template <typename T>
Parameter<T>* ParameterSet<T>::find(const std::string& name)
{
    for (auto& p : params_) {
        if (p.name == name) {
            return &p;
        }
    }
    return nullptr;
}

template <typename T>
const Parameter<T>* ParameterSet<T>::find(const std::string& name) const
{
    for (const auto& p : params_) {
        if (p.name == name) {
            return &p;
        }
    }
    return nullptr;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.value.size();
    }
    return n;
}

template <typename T>
void ParameterSet<T>::zero_grad()
{
    for (auto& p : params_) {
        p.zero_grad();
    }
}

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T bound, std::mt19937_64& rng)
{
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
    for (auto& v : t.data) {
        v = static_cast<T>(dist(rng));
    }
    return t;
}

template <typename T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform_tensor<T>(std::move(shape), static_cast<T>(bound), rng);
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open checkpoint for writing: " + path.string());
    }
    out.write("PENW", 4);
    io::write_le<std::uint32_t>(out, kCheckpointVersion);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, value] : tensors) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw DataError("parameter name too long: " + name);
        }
        if (value.rank() > std::numeric_limits<std::uint8_t>::max()) {
            throw DataError("tensor rank too large: " + name);
        }
        io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(value.rank()));
        for (std::size_t d : value.shape) {
            io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        }
        for (float v : value.data) {
            io::write_le<float>(out, v);
        }
    }
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint: " + path.string());
    }
    io::expect_magic(in, "PENW", path.string());
    const auto version = io::read_le<std::uint32_t>(in, "version");
    if (version != kCheckpointVersion) {
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = io::read_le<std::uint32_t>(in, "tensor count");
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = io::read_le<std::uint16_t>(in, "name length");
        std::string name(name_len, '\0');
        io::read_exact(in, name.data(), name_len, "name");
        const auto rank = io::read_le<std::uint8_t>(in, "rank");
        Shape shape(rank);
        for (auto& d : shape) {
            d = io::read_le<std::uint32_t>(in, "dims");
        }
        Tensor<float> value(shape);
        for (auto& v : value.data) {
            v = io::read_le<float>(in, "tensor data");
        }
        tensors.push_back({std::move(name), std::move(value)});
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw DataError(path.string() + ": trailing bytes after last tensor");
    }
    return tensors;
}

template <typename T>
std::vector<NamedTensor> snapshot(const ParameterSet<T>& params)
{
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (const auto& p : params.items()) {
        out.push_back({p.name, tensor_cast<float>(p.value)});
    }
    return out;
}

template <typename T>
void restore(ParameterSet<T>& params, const std::vector<NamedTensor>& tensors)
{
    for (auto& p : params.items()) {
        auto it = std::find_if(tensors.begin(), tensors.end(),
                               [&](const NamedTensor& t) { return t.name == p.name; });
        if (it == tensors.end()) {
            throw DataError("checkpoint lacks parameter " + p.name);
        }
        if (it->value.shape != p.value.shape) {
            throw DataError("checkpoint parameter " + p.name + " has shape " + to_string(it->value.shape) +
                            ", model expects " + to_string(p.value.shape));
        }
        p.value = tensor_cast<T>(it->value);
    }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template Tensor<float> uniform_tensor(Shape, float, std::mt19937_64&);
template Tensor<double> uniform_tensor(Shape, double, std::mt19937_64&);
template Tensor<float> glorot_uniform(Shape, std::size_t, std::size_t, std::mt19937_64&);
template Tensor<double> glorot_uniform(Shape, std::size_t, std::size_t, std::mt19937_64&);
template std::vector<NamedTensor> snapshot(const ParameterSet<float>&);
template std::vector<NamedTensor> snapshot(const ParameterSet<double>&);
template void restore(ParameterSet<float>&, const std::vector<NamedTensor>&);
template void restore(ParameterSet<double>&, const std::vector<NamedTensor>&);

}  // namespace pen
