#pragma once

#include <map>
#include <string>
#include <vector>

#include "gpolab/array.hpp"
#include "gpolab/param_store.hpp"

namespace gpolab {

using NodeId = int;
using GradMap = std::map<std::string, Array>;

// Define-by-run reverse-mode tape over a small set of dense primitives.
// Nodes are appended in topological order (inputs always precede users);
// backward() walks the record once in reverse. Tapes are single-owner and
// never shared across threads.
class Tape {
public:
    // Leaves. param() copies the current value and remembers the name so
    // backward() can report a gradient for it.
    NodeId leaf(Array value);
    NodeId param(const ParamStore& store, const std::string& name);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId add_rowvec(NodeId a, NodeId v);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId silu(NodeId a);
    NodeId relu(NodeId a);
    NodeId square(NodeId a);
    NodeId softplus(NodeId a);
    NodeId rowsum(NodeId a);
    NodeId sum(NodeId a);
    NodeId scale(NodeId a, double c);
    // Row gather-and-subtract over a column vector [B,1]: output row p is
    // a[pairs[p].first] - a[pairs[p].second]. Rows may repeat.
    NodeId pair_diff(NodeId a, std::vector<std::pair<size_t, size_t>> pairs);

    const Array& value(NodeId id) const { return nodes_[check(id)].value; }
    size_t size() const { return nodes_.size(); }

    // Gradients of a scalar loss w.r.t. every named parameter leaf reachable
    // from it. May be called repeatedly (adjoints reset per call).
    GradMap backward(NodeId loss);

private:
    enum class Op {
        Leaf,
        Matmul,
        Add,
        Sub,
        Mul,
        AddRowvec,
        ConcatCols,
        Silu,
        Relu,
        Square,
        Softplus,
        RowSum,
        Sum,
        Scale,
        PairDiff,
    };

    struct Node {
        Op op;
        NodeId a = -1;
        NodeId b = -1;
        double c = 0.0;
        Array value;
        std::string param_name;
        std::vector<std::pair<size_t, size_t>> pairs;
        Array adjoint;
        bool has_adjoint = false;
    };

    NodeId push(Node n);
    int check(NodeId id) const;
    void accumulate(NodeId id, const Array& contribution);

    std::vector<Node> nodes_;
};

}  // namespace gpolab
