#include "gpolab/tape.hpp"

#include "gpolab/kernels.hpp"

namespace gpolab {

namespace k = kernels;

int Tape::check(NodeId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
        throw UsageError("Tape: invalid node id " + std::to_string(id));
    }
    return id;
}

NodeId Tape::push(Node n) {
    check_finite(n.value, "tape node");
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Array value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Tape::param(const ParamStore& store, const std::string& name) {
    Node n;
    n.op = Op::Leaf;
    n.value = store.get(name);
    n.param_name = name;
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Matmul;
    n.a = check(a);
    n.b = check(b);
    n.value = k::matmul(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Add;
    n.a = check(a);
    n.b = check(b);
    n.value = k::ew_add(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Sub;
    n.a = check(a);
    n.b = check(b);
    n.value = k::ew_sub(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Mul;
    n.a = check(a);
    n.b = check(b);
    n.value = k::ew_mul(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::add_rowvec(NodeId a, NodeId v) {
    Node n;
    n.op = Op::AddRowvec;
    n.a = check(a);
    n.b = check(v);
    n.value = k::add_rowvec(nodes_[a].value, nodes_[v].value);
    return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
    const Array& x = nodes_[check(a)].value;
    const Array& y = nodes_[check(b)].value;
    if (x.shape.size() != 2 || y.shape.size() != 2 || x.shape[0] != y.shape[0]) {
        throw UsageError("concat_cols: need 2-D arrays with equal rows, got " +
                         shape_string(x.shape) + " and " + shape_string(y.shape));
    }
    const size_t m = x.shape[0], nx = x.shape[1], ny = y.shape[1];
    Array out({m, nx + ny});
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < nx; ++j) out.data[i * (nx + ny) + j] = x.data[i * nx + j];
        for (size_t j = 0; j < ny; ++j) out.data[i * (nx + ny) + nx + j] = y.data[i * ny + j];
    }
    Node n;
    n.op = Op::ConcatCols;
    n.a = a;
    n.b = b;
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::silu(NodeId a) {
    Node n;
    n.op = Op::Silu;
    n.a = check(a);
    n.value = k::ew_silu(nodes_[a].value);
    return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
    Node n;
    n.op = Op::Relu;
    n.a = check(a);
    n.value = k::ew_relu(nodes_[a].value);
    return push(std::move(n));
}

NodeId Tape::square(NodeId a) {
    Node n;
    n.op = Op::Square;
    n.a = check(a);
    n.value = k::ew_square(nodes_[a].value);
    return push(std::move(n));
}

NodeId Tape::softplus(NodeId a) {
    Node n;
    n.op = Op::Softplus;
    n.a = check(a);
    n.value = k::ew_softplus(nodes_[a].value);
    return push(std::move(n));
}

NodeId Tape::rowsum(NodeId a) {
    Node n;
    n.op = Op::RowSum;
    n.a = check(a);
    n.value = k::rowsum(nodes_[a].value);
    return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
    Node n;
    n.op = Op::Sum;
    n.a = check(a);
    Array out({1, 1});
    out.data[0] = static_cast<float>(k::sum_all(nodes_[a].value));
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = check(a);
    n.c = c;
    n.value = k::ew_scale(nodes_[a].value, c);
    return push(std::move(n));
}

NodeId Tape::pair_diff(NodeId a, std::vector<std::pair<size_t, size_t>> pairs) {
    const Array& x = nodes_[check(a)].value;
    if (x.shape.size() != 2 || x.shape[1] != 1) {
        throw UsageError("pair_diff: expected [B,1] column, got " + shape_string(x.shape));
    }
    Array out({pairs.size(), 1});
    for (size_t p = 0; p < pairs.size(); ++p) {
        const auto& [w, l] = pairs[p];
        if (w >= x.shape[0] || l >= x.shape[0]) throw UsageError("pair_diff: index out of range");
        out.data[p] = static_cast<float>(static_cast<double>(x.data[w]) -
                                         static_cast<double>(x.data[l]));
    }
    Node n;
    n.op = Op::PairDiff;
    n.a = a;
    n.pairs = std::move(pairs);
    n.value = std::move(out);
    return push(std::move(n));
}

void Tape::accumulate(NodeId id, const Array& contribution) {
    Node& n = nodes_[id];
    if (!n.has_adjoint) {
        n.adjoint = contribution;
        n.has_adjoint = true;
        return;
    }
    if (!n.adjoint.same_shape(contribution)) {
        throw UsageError("Tape: adjoint shape mismatch");
    }
    n.adjoint = k::ew_add(n.adjoint, contribution);
}

GradMap Tape::backward(NodeId loss) {
    check(loss);
    if (nodes_[loss].value.numel() != 1) {
        throw UsageError("Tape::backward: loss must be scalar, got shape " +
                         shape_string(nodes_[loss].value.shape));
    }
    for (Node& n : nodes_) {
        n.has_adjoint = false;
        n.adjoint = Array();
    }
    {
        Array one(nodes_[loss].value.shape);
        one.data[0] = 1.0f;
        nodes_[loss].adjoint = std::move(one);
        nodes_[loss].has_adjoint = true;
    }

    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.has_adjoint) continue;
        const Array& g = n.adjoint;
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Matmul:
                accumulate(n.a, k::matmul(g, false, nodes_[n.b].value, true));
                accumulate(n.b, k::matmul(nodes_[n.a].value, true, g, false));
                break;
            case Op::Add:
                accumulate(n.a, g);
                accumulate(n.b, g);
                break;
            case Op::Sub:
                accumulate(n.a, g);
                accumulate(n.b, k::ew_scale(g, -1.0));
                break;
            case Op::Mul:
                accumulate(n.a, k::ew_mul(g, nodes_[n.b].value));
                accumulate(n.b, k::ew_mul(g, nodes_[n.a].value));
                break;
            case Op::AddRowvec: {
                accumulate(n.a, g);
                Array dv = k::colsum(g);
                dv.shape = nodes_[n.b].value.shape;
                accumulate(n.b, dv);
                break;
            }
            case Op::ConcatCols: {
                const Array& x = nodes_[n.a].value;
                const Array& y = nodes_[n.b].value;
                const size_t m = x.shape[0], nx = x.shape[1], ny = y.shape[1];
                Array gx(x.shape), gy(y.shape);
                for (size_t i = 0; i < m; ++i) {
                    for (size_t j = 0; j < nx; ++j) gx.data[i * nx + j] = g.data[i * (nx + ny) + j];
                    for (size_t j = 0; j < ny; ++j)
                        gy.data[i * ny + j] = g.data[i * (nx + ny) + nx + j];
                }
                accumulate(n.a, gx);
                accumulate(n.b, gy);
                break;
            }
            case Op::Silu:
                accumulate(n.a, k::ew_silu_grad(nodes_[n.a].value, g));
                break;
            case Op::Relu:
                accumulate(n.a, k::ew_relu_grad(nodes_[n.a].value, g));
                break;
            case Op::Square:
                accumulate(n.a, k::ew_scale(k::ew_mul(g, nodes_[n.a].value), 2.0));
                break;
            case Op::Softplus:
                accumulate(n.a, k::ew_mul(g, k::ew_sigmoid(nodes_[n.a].value)));
                break;
            case Op::RowSum: {
                const Array& x = nodes_[n.a].value;
                const size_t m = x.shape[0], cols = x.shape[1];
                Array gx(x.shape);
                for (size_t i = 0; i < m; ++i) {
                    for (size_t j = 0; j < cols; ++j) gx.data[i * cols + j] = g.data[i];
                }
                accumulate(n.a, gx);
                break;
            }
            case Op::Sum: {
                const Array& x = nodes_[n.a].value;
                Array gx(x.shape);
                const float gv = g.data[0];
                for (float& v : gx.data) v = gv;
                accumulate(n.a, gx);
                break;
            }
            case Op::Scale:
                accumulate(n.a, k::ew_scale(g, n.c));
                break;
            case Op::PairDiff: {
                Array gx(nodes_[n.a].value.shape);
                for (size_t p = 0; p < n.pairs.size(); ++p) {
                    const auto& [w, l] = n.pairs[p];
                    gx.data[w] += g.data[p];
                    gx.data[l] -= g.data[p];
                }
                accumulate(n.a, gx);
                break;
            }
        }
    }

    GradMap grads;
    for (const Node& n : nodes_) {
        if (n.op == Op::Leaf && !n.param_name.empty() && n.has_adjoint) {
            check_finite(n.adjoint, "gradient of " + n.param_name);
            auto it = grads.find(n.param_name);
            if (it == grads.end()) {
                grads.emplace(n.param_name, n.adjoint);
            } else {
                // Same parameter introduced as several leaves on one tape.
                it->second = k::ew_add(it->second, n.adjoint);
            }
        }
    }
    return grads;
}

}  // namespace gpolab
