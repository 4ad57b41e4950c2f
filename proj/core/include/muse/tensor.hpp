#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "muse/error.hpp"

namespace muse {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Dense row-major array. Instantiated for float (training) and double
/// (finite-difference checking).
template <typename Real>
class Tensor {
  public:
    using value_type = Real;

    Tensor() = default;

    explicit Tensor(Shape shape, Real fill = Real(0))
        : m_shape(std::move(shape)), m_data(element_count(m_shape), fill)
    {}

    Tensor(Shape shape, std::vector<Real> values) : m_shape(std::move(shape)), m_data(std::move(values))
    {
        if (m_data.size() != element_count(m_shape)) {
            throw InvalidArgument("tensor: " + std::to_string(m_data.size())
                                  + " values do not fill shape " + to_string(m_shape));
        }
    }

    static Tensor scalar(Real value) { return Tensor(Shape{}, std::vector<Real>{value}); }

    [[nodiscard]] const Shape& shape() const noexcept { return m_shape; }
    [[nodiscard]] std::size_t rank() const noexcept { return m_shape.size(); }
    [[nodiscard]] std::size_t dim(std::size_t axis) const { return m_shape.at(axis); }
    [[nodiscard]] std::size_t size() const noexcept { return m_data.size(); }
    [[nodiscard]] bool empty() const noexcept { return m_data.empty(); }

    [[nodiscard]] Real* data() noexcept { return m_data.data(); }
    [[nodiscard]] const Real* data() const noexcept { return m_data.data(); }
    [[nodiscard]] std::span<Real> values() noexcept { return m_data; }
    [[nodiscard]] std::span<const Real> values() const noexcept { return m_data; }

    Real& operator[](std::size_t i) noexcept { return m_data[i]; }
    const Real& operator[](std::size_t i) const noexcept { return m_data[i]; }

    [[nodiscard]] Real item() const
    {
        if (m_data.size() != 1) throw InvalidArgument("tensor: item() on shape " + to_string(m_shape));
        return m_data[0];
    }

    [[nodiscard]] bool all_finite() const noexcept
    {
        for (Real v : m_data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(Real value) noexcept { std::fill(m_data.begin(), m_data.end(), value); }

    /// Same data viewed with a different shape of equal element count.
    [[nodiscard]] Tensor reshaped(Shape shape) const
    {
        return Tensor(std::move(shape), m_data);
    }

    template <typename Other>
    [[nodiscard]] Tensor<Other> cast() const
    {
        std::vector<Other> out(m_data.begin(), m_data.end());
        return Tensor<Other>(m_shape, std::move(out));
    }

    bool operator==(const Tensor&) const = default;

  private:
    Shape m_shape;
    std::vector<Real> m_data;
};

/// Which positions of a padded [batch, length] block hold real tokens.
struct SequenceMask {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<std::uint8_t> keep;

    static SequenceMask from_lengths(std::span<const std::size_t> lengths, std::size_t length);

    [[nodiscard]] bool at(std::size_t b, std::size_t t) const noexcept { return keep[b * length + t] != 0; }
    [[nodiscard]] std::size_t count(std::size_t b) const noexcept;
};

/// Named trainable arrays plus Adam moment accumulators.
template <typename Real>
class ParameterSet {
  public:
    void add(const std::string& name, Tensor<Real> value);

    [[nodiscard]] bool contains(const std::string& name) const { return m_values.count(name) != 0; }
    [[nodiscard]] Tensor<Real>& at(const std::string& name);
    [[nodiscard]] const Tensor<Real>& at(const std::string& name) const;
    [[nodiscard]] std::vector<std::string> names() const;
    [[nodiscard]] std::size_t size() const noexcept { return m_values.size(); }
    [[nodiscard]] std::size_t scalar_count() const;

    [[nodiscard]] const std::map<std::string, Tensor<Real>>& values() const noexcept { return m_values; }

    Tensor<Real>& first_moment(const std::string& name) { return m_first.at(name); }
    Tensor<Real>& second_moment(const std::string& name) { return m_second.at(name); }

    void reset_optimizer_state();

    template <typename Other>
    [[nodiscard]] ParameterSet<Other> cast() const
    {
        ParameterSet<Other> out;
        for (const auto& [name, value] : m_values) out.add(name, value.template cast<Other>());
        return out;
    }

    /// Parameter values only; optimizer state is ignored.
    bool operator==(const ParameterSet& other) const { return m_values == other.m_values; }

  private:
    std::map<std::string, Tensor<Real>> m_values;
    std::map<std::string, Tensor<Real>> m_first;
    std::map<std::string, Tensor<Real>> m_second;
};

template <typename Real>
using GradientMap = std::map<std::string, Tensor<Real>>;

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace muse
