#include "psi/flowexpert/graph.hpp"

#include <cmath>

#include "psi/common/errors.hpp"

namespace psi::flowexpert {

namespace {

void matmul_into(const Mat& a, const Mat& b, Mat& out, bool accumulate) {
    if (!accumulate) {
        out = Mat(a.rows, b.cols);
    }
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + static_cast<size_t>(i) * a.cols;
        double* orow = out.data.data() + static_cast<size_t>(i) * b.cols;
        for (int k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) {
                continue;
            }
            const double* brow = b.data.data() + static_cast<size_t>(k) * b.cols;
            for (int j = 0; j < b.cols; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
}

Mat transposed(const Mat& a) {
    Mat t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < a.cols; ++j) {
            t.at(j, i) = a.at(i, j);
        }
    }
    return t;
}

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

constexpr double kLnEps = 1e-5;

}  // namespace

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Mat& Graph::value(int id) const {
    return nodes_[static_cast<size_t>(id)].val;
}

const Mat& Graph::grad(int id) const {
    return nodes_[static_cast<size_t>(id)].grad;
}

Mat& Graph::grad_of(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.rows == 0) {
        n.grad = Mat(n.val.rows, n.val.cols);
    }
    return n.grad;
}

int Graph::input(Mat value) {
    Node n;
    n.op = Op::input;
    n.val = std::move(value);
    return push(std::move(n));
}

int Graph::param(const Mat* value, Mat* grad) {
    require_internal(value != nullptr && grad != nullptr, "graph param needs storage");
    require_internal(value->rows == grad->rows && value->cols == grad->cols,
                     "graph param grad shape mismatch");
    Node n;
    n.op = Op::param;
    n.val = *value;
    n.param_grad = grad;
    return push(std::move(n));
}

int Graph::matmul(int a, int b) {
    const Mat& va = value(a);
    const Mat& vb = value(b);
    require_internal(va.cols == vb.rows, "matmul inner dimension mismatch");
    Node n;
    n.op = Op::matmul;
    n.in = {a, b};
    matmul_into(va, vb, n.val, false);
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    const Mat& va = value(a);
    const Mat& vb = value(b);
    require_internal(va.same_shape(vb), "add shape mismatch");
    Node n;
    n.op = Op::add;
    n.in = {a, b};
    n.val = va;
    for (size_t i = 0; i < n.val.size(); ++i) {
        n.val.data[i] += vb.data[i];
    }
    return push(std::move(n));
}

int Graph::sub(int a, int b) {
    const Mat& va = value(a);
    const Mat& vb = value(b);
    require_internal(va.same_shape(vb), "sub shape mismatch");
    Node n;
    n.op = Op::sub;
    n.in = {a, b};
    n.val = va;
    for (size_t i = 0; i < n.val.size(); ++i) {
        n.val.data[i] -= vb.data[i];
    }
    return push(std::move(n));
}

int Graph::hadamard(int a, int b) {
    const Mat& va = value(a);
    const Mat& vb = value(b);
    require_internal(va.same_shape(vb), "hadamard shape mismatch");
    Node n;
    n.op = Op::hadamard;
    n.in = {a, b};
    n.val = va;
    for (size_t i = 0; i < n.val.size(); ++i) {
        n.val.data[i] *= vb.data[i];
    }
    return push(std::move(n));
}

int Graph::scale(int a, double s) {
    Node n;
    n.op = Op::scale;
    n.in = {a};
    n.scalar = s;
    n.val = value(a);
    for (double& v : n.val.data) {
        v *= s;
    }
    return push(std::move(n));
}

int Graph::add_row(int a, int row) {
    const Mat& va = value(a);
    const Mat& vr = value(row);
    require_internal(vr.rows == 1 && vr.cols == va.cols, "add_row shape mismatch");
    Node n;
    n.op = Op::add_row;
    n.in = {a, row};
    n.val = va;
    for (int i = 0; i < va.rows; ++i) {
        for (int j = 0; j < va.cols; ++j) {
            n.val.at(i, j) += vr.at(0, j);
        }
    }
    return push(std::move(n));
}

int Graph::mul_row(int a, int row) {
    const Mat& va = value(a);
    const Mat& vr = value(row);
    require_internal(vr.rows == 1 && vr.cols == va.cols, "mul_row shape mismatch");
    Node n;
    n.op = Op::mul_row;
    n.in = {a, row};
    n.val = va;
    for (int i = 0; i < va.rows; ++i) {
        for (int j = 0; j < va.cols; ++j) {
            n.val.at(i, j) *= vr.at(0, j);
        }
    }
    return push(std::move(n));
}

int Graph::tanh_op(int a) {
    Node n;
    n.op = Op::tanh_;
    n.in = {a};
    n.val = value(a);
    for (double& v : n.val.data) {
        v = std::tanh(v);
    }
    return push(std::move(n));
}

int Graph::silu(int a) {
    Node n;
    n.op = Op::silu;
    n.in = {a};
    n.val = value(a);
    for (double& v : n.val.data) {
        v = v * sigmoid(v);
    }
    return push(std::move(n));
}

int Graph::layernorm_rows(int a) {
    const Mat& va = value(a);
    Node n;
    n.op = Op::layernorm;
    n.in = {a};
    n.val = Mat(va.rows, va.cols);
    n.aux = Mat(va.rows, 1);  // per-row 1/std
    for (int i = 0; i < va.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < va.cols; ++j) {
            mean += va.at(i, j);
        }
        mean /= va.cols;
        double var = 0.0;
        for (int j = 0; j < va.cols; ++j) {
            const double d = va.at(i, j) - mean;
            var += d * d;
        }
        var /= va.cols;
        const double inv_std = 1.0 / std::sqrt(var + kLnEps);
        n.aux.at(i, 0) = inv_std;
        for (int j = 0; j < va.cols; ++j) {
            n.val.at(i, j) = (va.at(i, j) - mean) * inv_std;
        }
    }
    return push(std::move(n));
}

int Graph::softmax_rows(int a) {
    const Mat& va = value(a);
    Node n;
    n.op = Op::softmax;
    n.in = {a};
    n.val = Mat(va.rows, va.cols);
    for (int i = 0; i < va.rows; ++i) {
        double m = va.at(i, 0);
        for (int j = 1; j < va.cols; ++j) {
            m = std::max(m, va.at(i, j));
        }
        double z = 0.0;
        for (int j = 0; j < va.cols; ++j) {
            const double e = std::exp(va.at(i, j) - m);
            n.val.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < va.cols; ++j) {
            n.val.at(i, j) /= z;
        }
    }
    return push(std::move(n));
}

int Graph::softmax_rows_causal(int a) {
    const Mat& va = value(a);
    require_internal(va.rows == va.cols, "causal softmax needs a square score matrix");
    Node n;
    n.op = Op::softmax_causal;
    n.in = {a};
    n.val = Mat(va.rows, va.cols);
    for (int i = 0; i < va.rows; ++i) {
        double m = va.at(i, 0);
        for (int j = 1; j <= i; ++j) {
            m = std::max(m, va.at(i, j));
        }
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
            const double e = std::exp(va.at(i, j) - m);
            n.val.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j <= i; ++j) {
            n.val.at(i, j) /= z;
        }
    }
    return push(std::move(n));
}

int Graph::transpose(int a) {
    Node n;
    n.op = Op::transpose;
    n.in = {a};
    n.val = transposed(value(a));
    return push(std::move(n));
}

int Graph::concat_rows(int a, int b) {
    const Mat& va = value(a);
    const Mat& vb = value(b);
    require_internal(va.cols == vb.cols, "concat_rows column mismatch");
    Node n;
    n.op = Op::concat_rows;
    n.in = {a, b};
    n.val = Mat(va.rows + vb.rows, va.cols);
    std::copy(va.data.begin(), va.data.end(), n.val.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), n.val.data.begin() + static_cast<long>(va.size()));
    return push(std::move(n));
}

int Graph::slice_rows(int a, int r0, int r1) {
    const Mat& va = value(a);
    require_internal(0 <= r0 && r0 < r1 && r1 <= va.rows, "slice_rows out of range");
    Node n;
    n.op = Op::slice_rows;
    n.in = {a};
    n.i0 = r0;
    n.i1 = r1;
    n.val = Mat(r1 - r0, va.cols);
    std::copy(va.data.begin() + static_cast<long>(r0) * va.cols,
              va.data.begin() + static_cast<long>(r1) * va.cols, n.val.data.begin());
    return push(std::move(n));
}

int Graph::slice_cols(int a, int c0, int c1) {
    const Mat& va = value(a);
    require_internal(0 <= c0 && c0 < c1 && c1 <= va.cols, "slice_cols out of range");
    Node n;
    n.op = Op::slice_cols;
    n.in = {a};
    n.i0 = c0;
    n.i1 = c1;
    n.val = Mat(va.rows, c1 - c0);
    for (int i = 0; i < va.rows; ++i) {
        for (int j = c0; j < c1; ++j) {
            n.val.at(i, j - c0) = va.at(i, j);
        }
    }
    return push(std::move(n));
}

int Graph::concat_cols(const std::vector<int>& parts) {
    require_internal(!parts.empty(), "concat_cols needs at least one part");
    int total_cols = 0;
    const int rows = value(parts[0]).rows;
    for (int p : parts) {
        require_internal(value(p).rows == rows, "concat_cols row mismatch");
        total_cols += value(p).cols;
    }
    Node n;
    n.op = Op::concat_cols;
    n.in = parts;
    n.val = Mat(rows, total_cols);
    int c = 0;
    for (int p : parts) {
        const Mat& vp = value(p);
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < vp.cols; ++j) {
                n.val.at(i, c + j) = vp.at(i, j);
            }
        }
        c += vp.cols;
    }
    return push(std::move(n));
}

int Graph::gather_rows(int a, std::vector<int> indices) {
    const Mat& va = value(a);
    Node n;
    n.op = Op::gather_rows;
    n.in = {a};
    n.val = Mat(static_cast<int>(indices.size()), va.cols);
    for (size_t i = 0; i < indices.size(); ++i) {
        require_internal(indices[i] >= 0 && indices[i] < va.rows, "gather_rows index out of range");
        for (int j = 0; j < va.cols; ++j) {
            n.val.at(static_cast<int>(i), j) = va.at(indices[i], j);
        }
    }
    n.indices = std::move(indices);
    return push(std::move(n));
}

int Graph::reshape(int a, int rows, int cols) {
    const Mat& va = value(a);
    require_internal(static_cast<size_t>(rows) * static_cast<size_t>(cols) == va.size(),
                     "reshape element count mismatch");
    Node n;
    n.op = Op::reshape;
    n.in = {a};
    n.val = va;
    n.val.rows = rows;
    n.val.cols = cols;
    return push(std::move(n));
}

int Graph::mean_sq_error_masked(int pred, int target, std::vector<uint8_t> row_mask) {
    const Mat& vp = value(pred);
    const Mat& vt = value(target);
    require_internal(vp.same_shape(vt), "loss shape mismatch");
    require_internal(static_cast<int>(row_mask.size()) == vp.rows, "loss mask length mismatch");
    long long live = 0;
    for (uint8_t m : row_mask) {
        live += m ? 1 : 0;
    }
    require_data(live > 0, "empty loss support");

    Node n;
    n.op = Op::mse_masked;
    n.in = {pred, target};
    n.mask = std::move(row_mask);
    n.scalar = static_cast<double>(live) * vp.cols;  // entry count
    double acc = 0.0;
    for (int i = 0; i < vp.rows; ++i) {
        if (!n.mask[static_cast<size_t>(i)]) {
            continue;
        }
        for (int j = 0; j < vp.cols; ++j) {
            const double d = vp.at(i, j) - vt.at(i, j);
            acc += d * d;
        }
    }
    n.val = Mat(1, 1);
    n.val.at(0, 0) = acc / n.scalar;
    return push(std::move(n));
}

int Graph::cross_entropy_rows(int logits, std::vector<int> targets) {
    const Mat& vl = value(logits);
    require_data(!targets.empty(), "empty sequence");
    require_internal(static_cast<int>(targets.size()) == vl.rows, "target count mismatch");

    Node n;
    n.op = Op::cross_entropy;
    n.in = {logits};
    n.aux = Mat(vl.rows, vl.cols);  // softmax probabilities
    double acc = 0.0;
    for (int i = 0; i < vl.rows; ++i) {
        const int t = targets[static_cast<size_t>(i)];
        require_data(t >= 0 && t < vl.cols, "target token outside vocabulary");
        double m = vl.at(i, 0);
        for (int j = 1; j < vl.cols; ++j) {
            m = std::max(m, vl.at(i, j));
        }
        double z = 0.0;
        for (int j = 0; j < vl.cols; ++j) {
            const double e = std::exp(vl.at(i, j) - m);
            n.aux.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < vl.cols; ++j) {
            n.aux.at(i, j) /= z;
        }
        acc += m + std::log(z) - vl.at(i, t);
    }
    n.indices = std::move(targets);
    n.val = Mat(1, 1);
    n.val.at(0, 0) = acc / vl.rows;
    return push(std::move(n));
}

void Graph::backward(int loss_id) {
    require_internal(loss_id >= 0 && loss_id < static_cast<int>(nodes_.size()),
                     "backward on unknown node");
    require_internal(value(loss_id).rows == 1 && value(loss_id).cols == 1,
                     "backward needs a scalar loss node");
    grad_of(loss_id).at(0, 0) += 1.0;
    for (int id = loss_id; id >= 0; --id) {
        if (nodes_[static_cast<size_t>(id)].grad.rows == 0) {
            continue;
        }
        backprop_node(id);
    }
}

void Graph::backprop_node(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    const Mat& g = n.grad;
    switch (n.op) {
        case Op::input:
            break;
        case Op::param:
            for (size_t i = 0; i < g.size(); ++i) {
                n.param_grad->data[i] += g.data[i];
            }
            break;
        case Op::matmul: {
            // dA += g * B^T ; dB += A^T * g
            const Mat bt = transposed(value(n.in[1]));
            matmul_into(g, bt, grad_of(n.in[0]), true);
            const Mat at = transposed(value(n.in[0]));
            matmul_into(at, g, grad_of(n.in[1]), true);
            break;
        }
        case Op::add: {
            Mat& ga = grad_of(n.in[0]);
            Mat& gb = grad_of(n.in[1]);
            for (size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] += g.data[i];
            }
            break;
        }
        case Op::sub: {
            Mat& ga = grad_of(n.in[0]);
            Mat& gb = grad_of(n.in[1]);
            for (size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] -= g.data[i];
            }
            break;
        }
        case Op::hadamard: {
            Mat& ga = grad_of(n.in[0]);
            Mat& gb = grad_of(n.in[1]);
            const Mat& va = value(n.in[0]);
            const Mat& vb = value(n.in[1]);
            for (size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i] * vb.data[i];
                gb.data[i] += g.data[i] * va.data[i];
            }
            break;
        }
        case Op::scale: {
            Mat& ga = grad_of(n.in[0]);
            for (size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i] * n.scalar;
            }
            break;
        }
        case Op::add_row: {
            Mat& ga = grad_of(n.in[0]);
            Mat& gr = grad_of(n.in[1]);
            for (int i = 0; i < g.rows; ++i) {
                for (int j = 0; j < g.cols; ++j) {
                    ga.at(i, j) += g.at(i, j);
                    gr.at(0, j) += g.at(i, j);
                }
            }
            break;
        }
        case Op::mul_row: {
            Mat& ga = grad_of(n.in[0]);
            Mat& gr = grad_of(n.in[1]);
            const Mat& va = value(n.in[0]);
            const Mat& vr = value(n.in[1]);
            for (int i = 0; i < g.rows; ++i) {
                for (int j = 0; j < g.cols; ++j) {
                    ga.at(i, j) += g.at(i, j) * vr.at(0, j);
                    gr.at(0, j) += g.at(i, j) * va.at(i, j);
                }
            }
            break;
        }
        case Op::tanh_: {
            Mat& ga = grad_of(n.in[0]);
            for (size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i] * (1.0 - n.val.data[i] * n.val.data[i]);
            }
            break;
        }
        case Op::silu: {
            Mat& ga = grad_of(n.in[0]);
            const Mat& x = value(n.in[0]);
            for (size_t i = 0; i < g.size(); ++i) {
                const double s = sigmoid(x.data[i]);
                ga.data[i] += g.data[i] * s * (1.0 + x.data[i] * (1.0 - s));
            }
            break;
        }
        case Op::layernorm: {
            Mat& ga = grad_of(n.in[0]);
            for (int i = 0; i < g.rows; ++i) {
                const double inv_std = n.aux.at(i, 0);
                double mean_g = 0.0;
                double mean_gy = 0.0;
                for (int j = 0; j < g.cols; ++j) {
                    mean_g += g.at(i, j);
                    mean_gy += g.at(i, j) * n.val.at(i, j);
                }
                mean_g /= g.cols;
                mean_gy /= g.cols;
                for (int j = 0; j < g.cols; ++j) {
                    ga.at(i, j) +=
                        inv_std * (g.at(i, j) - mean_g - n.val.at(i, j) * mean_gy);
                }
            }
            break;
        }
        case Op::softmax:
        case Op::softmax_causal: {
            Mat& ga = grad_of(n.in[0]);
            for (int i = 0; i < g.rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < g.cols; ++j) {
                    dot += g.at(i, j) * n.val.at(i, j);
                }
                for (int j = 0; j < g.cols; ++j) {
                    ga.at(i, j) += n.val.at(i, j) * (g.at(i, j) - dot);
                }
            }
            break;
        }
        case Op::transpose: {
            Mat& ga = grad_of(n.in[0]);
            for (int i = 0; i < g.rows; ++i) {
                for (int j = 0; j < g.cols; ++j) {
                    ga.at(j, i) += g.at(i, j);
                }
            }
            break;
        }
        case Op::concat_rows: {
            Mat& ga = grad_of(n.in[0]);
            Mat& gb = grad_of(n.in[1]);
            const size_t na = ga.size();
            for (size_t i = 0; i < na; ++i) {
                ga.data[i] += g.data[i];
            }
            for (size_t i = 0; i < gb.size(); ++i) {
                gb.data[i] += g.data[na + i];
            }
            break;
        }
        case Op::slice_rows: {
            Mat& ga = grad_of(n.in[0]);
            for (int i = 0; i < g.rows; ++i) {
                for (int j = 0; j < g.cols; ++j) {
                    ga.at(n.i0 + i, j) += g.at(i, j);
                }
            }
            break;
        }
        case Op::slice_cols: {
            Mat& ga = grad_of(n.in[0]);
            for (int i = 0; i < g.rows; ++i) {
                for (int j = 0; j < g.cols; ++j) {
                    ga.at(i, n.i0 + j) += g.at(i, j);
                }
            }
            break;
        }
        case Op::concat_cols: {
            int c = 0;
            for (int p : n.in) {
                Mat& gp = grad_of(p);
                for (int i = 0; i < gp.rows; ++i) {
                    for (int j = 0; j < gp.cols; ++j) {
                        gp.at(i, j) += g.at(i, c + j);
                    }
                }
                c += gp.cols;
            }
            break;
        }
        case Op::gather_rows: {
            Mat& ga = grad_of(n.in[0]);
            for (size_t i = 0; i < n.indices.size(); ++i) {
                for (int j = 0; j < g.cols; ++j) {
                    ga.at(n.indices[i], j) += g.at(static_cast<int>(i), j);
                }
            }
            break;
        }
        case Op::reshape: {
            Mat& ga = grad_of(n.in[0]);
            for (size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i];
            }
            break;
        }
        case Op::mse_masked: {
            Mat& gp = grad_of(n.in[0]);
            Mat& gt = grad_of(n.in[1]);
            const Mat& vp = value(n.in[0]);
            const Mat& vt = value(n.in[1]);
            const double w = 2.0 * g.at(0, 0) / n.scalar;
            for (int i = 0; i < vp.rows; ++i) {
                if (!n.mask[static_cast<size_t>(i)]) {
                    continue;
                }
                for (int j = 0; j < vp.cols; ++j) {
                    const double d = w * (vp.at(i, j) - vt.at(i, j));
                    gp.at(i, j) += d;
                    gt.at(i, j) -= d;
                }
            }
            break;
        }
        case Op::cross_entropy: {
            Mat& gl = grad_of(n.in[0]);
            const double w = g.at(0, 0) / n.aux.rows;
            for (int i = 0; i < n.aux.rows; ++i) {
                for (int j = 0; j < n.aux.cols; ++j) {
                    const double onehot = j == n.indices[static_cast<size_t>(i)] ? 1.0 : 0.0;
                    gl.at(i, j) += w * (n.aux.at(i, j) - onehot);
                }
            }
            break;
        }
    }
}

}  // namespace psi::flowexpert
