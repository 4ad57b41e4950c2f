#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "muse/tensor.hpp"

namespace muse {

/// Handle to a node recorded on a Graph.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode differentiation tape.
///
/// Every primitive evaluates eagerly, checks its input shapes, and (when the
/// graph records) stores a closure that propagates the output gradient to its
/// inputs. Nodes are appended in evaluation order, so a reverse sweep visits
/// them in topological order and each exactly once.
///
/// Shapes follow the [batch, length, features] convention for sequences.
/// Element-wise primitives broadcast a rank-1 right operand along the last
/// axis of the left one (bias addition). A graph is single-threaded; distinct
/// graphs may run concurrently against the same read-only ParameterSet.
template <typename Real>
class Graph {
  public:
    explicit Graph(bool record = true) : m_record(record) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    [[nodiscard]] bool recording() const noexcept { return m_record; }

    Var constant(Tensor<Real> value);

    /// Leaf bound to `params[name]`. Repeated calls return the same node, so a
    /// parameter shared by several paths accumulates all their gradients.
    Var parameter(const ParameterSet<Real>& params, const std::string& name);

    [[nodiscard]] const Tensor<Real>& value(Var v) const { return m_nodes.at(v.id).value; }
    [[nodiscard]] const Shape& shape(Var v) const { return value(v).shape(); }

    // -- primitives ---------------------------------------------------------

    /// a[..., k] x b[k, n] -> [..., n]; with transpose_b, b is [n, k].
    Var matmul(Var a, Var b, bool transpose_b = false);
    Var add(Var a, Var b);
    Var subtract(Var a, Var b);
    Var multiply(Var a, Var b);
    Var scale(Var a, Real factor);
    Var abs(Var a);
    Var relu(Var a);
    Var tanh(Var a);
    /// Softmax over the last axis.
    Var softmax(Var a);
    /// Normalises over the last axis, then applies gain and bias (both [d]).
    Var layer_norm(Var x, Var gain, Var bias, Real epsilon = Real(1e-6));
    /// x[B, T, C] convolved with w[W, C, F] plus b[F]; same padding. Masked
    /// positions of x read as zero, exactly as if the sequence were shorter.
    Var conv1d(Var x, Var weight, Var bias, const SequenceMask& mask);
    /// x[B, T, D] -> [B, D], averaging only positions the mask keeps.
    Var masked_mean_pool(Var x, const SequenceMask& mask);
    /// table[V, D] gathered at ids (batch x length, row-major) -> [B, T, D].
    Var embedding_lookup(Var table, std::span<const std::int32_t> ids, std::size_t batch, std::size_t length);
    /// Concatenates along the last axis; leading dimensions must agree.
    Var concat(std::span<const Var> parts);
    /// Multi-head scaled dot-product attention over q, k, v [B, T, D]. Keys the
    /// mask drops receive zero weight.
    Var scaled_dot_attention(Var q, Var k, Var v, const SequenceMask& mask, std::size_t heads);
    /// Mean over rows of -log softmax(logits[N, C])[label].
    Var cross_entropy_from_logits(Var logits, std::span<const std::int32_t> labels);
    Var sum(Var a);
    Var mean(Var a);
    Var reshape(Var a, Shape shape);

    // -- differentiation ----------------------------------------------------

    /// Propagates d(loss)/d(node) to every node. `loss` must be a scalar.
    void backward(Var loss);

    /// Gradient accumulated at a node by the last backward(); zeros if none.
    [[nodiscard]] Tensor<Real> grad(Var v) const;

    /// d(loss)/d(param) for every entry of params (zeros for parameters the
    /// tape never touched). Requires a prior backward().
    [[nodiscard]] GradientMap<Real> gradients(const ParameterSet<Real>& params) const;

    [[nodiscard]] std::size_t node_count() const noexcept { return m_nodes.size(); }
    /// Bytes held by node values; an estimate of activation memory.
    [[nodiscard]] std::size_t value_bytes() const noexcept;

  private:
    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad;
        std::function<void(Graph&, std::size_t)> backward;
    };

    Var push(Tensor<Real> value, const char* op, std::function<void(Graph&, std::size_t)> backward);
    Tensor<Real>& grad_ref(std::size_t id);
    Var elementwise_binary(Var a, Var b, int kind);

    bool m_record;
    bool m_backward_done = false;
    std::vector<Node> m_nodes;
    std::unordered_map<std::string, std::size_t> m_param_nodes;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace muse
