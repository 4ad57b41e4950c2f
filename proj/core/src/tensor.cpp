#include "muse/tensor.hpp"

#include <numeric>

namespace muse {

std::string to_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t element_count(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

SequenceMask SequenceMask::from_lengths(std::span<const std::size_t> lengths, std::size_t length)
{
    SequenceMask mask;
    mask.batch = lengths.size();
    mask.length = length;
    mask.keep.assign(mask.batch * length, 0);
    for (std::size_t b = 0; b < lengths.size(); ++b) {
        if (lengths[b] > length) throw InvalidArgument("mask: sequence length exceeds block length");
        for (std::size_t t = 0; t < lengths[b]; ++t) mask.keep[b * length + t] = 1;
    }
    return mask;
}

std::size_t SequenceMask::count(std::size_t b) const noexcept
{
    std::size_t n = 0;
    for (std::size_t t = 0; t < length; ++t) n += keep[b * length + t];
    return n;
}

template <typename Real>
void ParameterSet<Real>::add(const std::string& name, Tensor<Real> value)
{
    if (m_values.count(name) != 0) throw InvalidArgument("parameter set: duplicate name '" + name + "'");
    m_first.emplace(name, Tensor<Real>(value.shape()));
    m_second.emplace(name, Tensor<Real>(value.shape()));
    m_values.emplace(name, std::move(value));
}

template <typename Real>
Tensor<Real>& ParameterSet<Real>::at(const std::string& name)
{
    auto it = m_values.find(name);
    if (it == m_values.end()) throw InvalidArgument("parameter set: no parameter '" + name + "'");
    return it->second;
}

template <typename Real>
const Tensor<Real>& ParameterSet<Real>::at(const std::string& name) const
{
    auto it = m_values.find(name);
    if (it == m_values.end()) throw InvalidArgument("parameter set: no parameter '" + name + "'");
    return it->second;
}

template <typename Real>
std::vector<std::string> ParameterSet<Real>::names() const
{
    std::vector<std::string> out;
    out.reserve(m_values.size());
    for (const auto& entry : m_values) out.push_back(entry.first);
    return out;
}

template <typename Real>
std::size_t ParameterSet<Real>::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& entry : m_values) n += entry.second.size();
    return n;
}

template <typename Real>
void ParameterSet<Real>::reset_optimizer_state()
{
    for (auto& entry : m_first) entry.second.fill(Real(0));
    for (auto& entry : m_second) entry.second.fill(Real(0));
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace muse
