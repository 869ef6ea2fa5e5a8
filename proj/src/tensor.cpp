#include "rfs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace rfs {

namespace {

using detail::Node;

std::size_t shape_product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw DimensionError("negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::shared_ptr<Node> make_node(std::vector<int> shape, std::vector<double> data,
                                bool requires_grad) {
    if (shape_product(shape) != data.size())
        throw DimensionError("shape does not match data length");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return n;
}

Tensor wrap(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

std::shared_ptr<Node> op_node(std::vector<int> shape, std::vector<double> data,
                              std::vector<std::shared_ptr<Node>> parents,
                              std::function<void(Node&)> backward) {
    auto n = make_node(std::move(shape), std::move(data), false);
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward);
    }
    return n;
}

void require_2d(const Tensor& t, const char* what) {
    if (t.shape().size() != 2) throw DimensionError(std::string(what) + ": expected a 2-D tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(what) + ": shape mismatch");
}

// Stable per-row softmax into out (same layout as logits).
void softmax_rows_raw(const double* logits, int rows, int cols, double* out) {
    for (int i = 0; i < rows; ++i) {
        const double* z = logits + static_cast<std::size_t>(i) * cols;
        double* p = out + static_cast<std::size_t>(i) * cols;
        double zmax = z[0];
        for (int c = 1; c < cols; ++c) zmax = std::max(zmax, z[c]);
        double denom = 0.0;
        for (int c = 0; c < cols; ++c) {
            p[c] = std::exp(z[c] - zmax);
            denom += p[c];
        }
        for (int c = 0; c < cols; ++c) p[c] /= denom;
    }
}

// Per-row log-sum-exp.
double row_lse(const double* z, int cols) {
    double zmax = z[0];
    for (int c = 1; c < cols; ++c) zmax = std::max(zmax, z[c]);
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += std::exp(z[c] - zmax);
    return zmax + std::log(s);
}

}  // namespace

// ---- Tensor --------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    std::size_t n = shape_product(shape);
    return wrap(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    return wrap(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

int Tensor::rows() const {
    require_2d(*this, "rows");
    return node_->shape[0];
}

int Tensor::cols() const {
    require_2d(*this, "cols");
    return node_->shape[1];
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

double Tensor::value() const {
    if (size() != 1) throw DimensionError("value(): tensor is not a scalar");
    return node_->data[0];
}

void Tensor::zero_grad() {
    if (node_) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::detach_copy() const {
    return from(node_->shape, node_->data, false);
}

void Tensor::backward() const {
    if (size() != 1) throw DimensionError("backward(): output must be a scalar");
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; children appear after all their parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int r = a.shape()[0], k = a.shape()[1];
    const int k2 = b.shape()[0], c = b.shape()[1];
    if (k != k2) throw DimensionError("matmul: inner dimensions do not match");

    std::vector<double> out(static_cast<std::size_t>(r) * c, 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (int i = 0; i < r; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const double av = ad[static_cast<std::size_t>(i) * k + kk];
            if (av == 0.0) continue;
            const double* brow = bd.data() + static_cast<std::size_t>(kk) * c;
            double* orow = out.data() + static_cast<std::size_t>(i) * c;
            for (int j = 0; j < c; ++j) orow[j] += av * brow[j];
        }
    }

    auto an = a.node_, bn = b.node_;
    auto backward = [an, bn, r, k, c](Node& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
            an->ensure_grad();
            // dA += dC * B^T
            for (int i = 0; i < r; ++i)
                for (int kk = 0; kk < k; ++kk) {
                    double acc = 0.0;
                    const double* grow = g.data() + static_cast<std::size_t>(i) * c;
                    const double* brow = bn->data.data() + static_cast<std::size_t>(kk) * c;
                    for (int j = 0; j < c; ++j) acc += grow[j] * brow[j];
                    an->grad[static_cast<std::size_t>(i) * k + kk] += acc;
                }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            // dB += A^T * dC
            for (int i = 0; i < r; ++i) {
                const double* arow = an->data.data() + static_cast<std::size_t>(i) * k;
                const double* grow = g.data() + static_cast<std::size_t>(i) * c;
                for (int kk = 0; kk < k; ++kk) {
                    const double av = arow[kk];
                    if (av == 0.0) continue;
                    double* brow = bn->grad.data() + static_cast<std::size_t>(kk) * c;
                    for (int j = 0; j < c; ++j) brow[j] += av * grow[j];
                }
            }
        }
    };
    Tensor t;
    t.node_ = op_node({r, c}, std::move(out), {an, bn}, backward);
    return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto an = a.node_, bn = b.node_;
    auto backward = [an, bn](Node& self) {
        for (auto* p : {an.get(), bn.get()}) {
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    };
    Tensor t;
    t.node_ = op_node(a.shape(), std::move(out), {an, bn}, backward);
    return t;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    require_2d(a, "add_rowvec");
    if (v.shape().size() != 1 || v.shape()[0] != a.shape()[1])
        throw DimensionError("add_rowvec: vector length must equal column count");
    const int r = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(a.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out[static_cast<std::size_t>(i) * c + j] =
                a.data()[static_cast<std::size_t>(i) * c + j] + v.data()[j];
    auto an = a.node_, vn = v.node_;
    auto backward = [an, vn, r, c](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (vn->requires_grad) {
            vn->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j)
                    vn->grad[j] += self.grad[static_cast<std::size_t>(i) * c + j];
        }
    };
    Tensor t;
    t.node_ = op_node(a.shape(), std::move(out), {an, vn}, backward);
    return t;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto an = a.node_, bn = b.node_;
    auto backward = [an, bn](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    };
    Tensor t;
    t.node_ = op_node(a.shape(), std::move(out), {an, bn}, backward);
    return t;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto an = a.node_, bn = b.node_;
    auto backward = [an, bn](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] += self.grad[i] * an->data[i];
        }
    };
    Tensor t;
    t.node_ = op_node(a.shape(), std::move(out), {an, bn}, backward);
    return t;
}

Tensor sum_all(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    auto an = a.node_;
    auto backward = [an](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (double& g : an->grad) g += self.grad[0];
    };
    Tensor t;
    t.node_ = op_node({1}, {acc}, {an}, backward);
    return t;
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
    auto an = a.node_;
    auto backward = [an, s](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += s * self.grad[i];
    };
    Tensor t;
    t.node_ = op_node(a.shape(), std::move(out), {an}, backward);
    return t;
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    auto an = a.node_;
    auto backward = [an](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (an->data[i] > 0.0) an->grad[i] += self.grad[i];
    };
    Tensor t;
    t.node_ = op_node(a.shape(), std::move(out), {an}, backward);
    return t;
}

Tensor gather_rows(const Tensor& a, std::vector<int> row_indices) {
    require_2d(a, "gather_rows");
    const int r = a.shape()[0], c = a.shape()[1];
    for (int idx : row_indices)
        if (idx < 0 || idx >= r) throw DimensionError("gather_rows: row index out of range");
    std::vector<double> out(row_indices.size() * static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < row_indices.size(); ++i)
        std::copy_n(a.data().data() + static_cast<std::size_t>(row_indices[i]) * c, c,
                    out.data() + i * c);
    auto an = a.node_;
    auto idx = std::make_shared<std::vector<int>>(std::move(row_indices));
    auto backward = [an, idx, c](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < idx->size(); ++i) {
            double* dst = an->grad.data() + static_cast<std::size_t>((*idx)[i]) * c;
            const double* src = self.grad.data() + i * c;
            for (int j = 0; j < c; ++j) dst[j] += src[j];
        }
    };
    Tensor t;
    t.node_ = op_node({static_cast<int>(idx->size()), c}, std::move(out), {an}, backward);
    return t;
}

Tensor slice_cols(const Tensor& a, int col_begin, int col_end) {
    require_2d(a, "slice_cols");
    const int r = a.shape()[0], c = a.shape()[1];
    if (col_begin < 0 || col_end > c || col_begin >= col_end)
        throw DimensionError("slice_cols: invalid column range");
    const int w = col_end - col_begin;
    std::vector<double> out(static_cast<std::size_t>(r) * w);
    for (int i = 0; i < r; ++i)
        std::copy_n(a.data().data() + static_cast<std::size_t>(i) * c + col_begin, w,
                    out.data() + static_cast<std::size_t>(i) * w);
    auto an = a.node_;
    auto backward = [an, r, c, w, col_begin](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < r; ++i) {
            double* dst = an->grad.data() + static_cast<std::size_t>(i) * c + col_begin;
            const double* src = self.grad.data() + static_cast<std::size_t>(i) * w;
            for (int j = 0; j < w; ++j) dst[j] += src[j];
        }
    };
    Tensor t;
    t.node_ = op_node({r, w}, std::move(out), {an}, backward);
    return t;
}

Tensor aggregate_rotations(const Tensor& aug_logits, int class_count) {
    require_2d(aug_logits, "aggregate_rotations");
    const int rows = aug_logits.shape()[0], width = aug_logits.shape()[1];
    if (rows % 4 != 0)
        throw ProtocolError("aggregate_rotations: row count must be a multiple of 4");
    if (width != 4 * class_count)
        throw ProtocolError("aggregate_rotations: width must be 4 x class count");
    const int b = rows / 4;
    std::vector<double> out(static_cast<std::size_t>(b) * class_count, 0.0);
    const auto& ad = aug_logits.data();
    for (int i = 0; i < b; ++i)
        for (int c = 0; c < class_count; ++c) {
            double acc = 0.0;
            for (int j = 0; j < 4; ++j)
                acc += ad[static_cast<std::size_t>(4 * i + j) * width + (4 * c + j)];
            out[static_cast<std::size_t>(i) * class_count + c] = 0.25 * acc;
        }
    auto an = aug_logits.node_;
    auto backward = [an, b, class_count, width](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < b; ++i)
            for (int c = 0; c < class_count; ++c) {
                const double g = 0.25 * self.grad[static_cast<std::size_t>(i) * class_count + c];
                for (int j = 0; j < 4; ++j)
                    an->grad[static_cast<std::size_t>(4 * i + j) * width + (4 * c + j)] += g;
            }
    };
    Tensor t;
    t.node_ = op_node({b, class_count}, std::move(out), {an}, backward);
    return t;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_2d(logits, "cross_entropy");
    const int b = logits.shape()[0], c = logits.shape()[1];
    if (static_cast<int>(labels.size()) != b)
        throw DimensionError("cross_entropy: label count must equal batch size");
    for (int y : labels)
        if (y < 0 || y >= c) throw LabelError("cross_entropy: label out of range");

    double loss = 0.0;
    const auto& z = logits.data();
    for (int i = 0; i < b; ++i) {
        const double* row = z.data() + static_cast<std::size_t>(i) * c;
        loss += row_lse(row, c) - row[labels[i]];
    }
    loss /= b;

    auto ln = logits.node_;
    auto lab = std::make_shared<std::vector<int>>(labels);
    auto backward = [ln, lab, b, c](Node& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double g = self.grad[0] / b;
        std::vector<double> p(static_cast<std::size_t>(b) * c);
        softmax_rows_raw(ln->data.data(), b, c, p.data());
        for (int i = 0; i < b; ++i) {
            double* dst = ln->grad.data() + static_cast<std::size_t>(i) * c;
            const double* pi = p.data() + static_cast<std::size_t>(i) * c;
            for (int j = 0; j < c; ++j) dst[j] += g * pi[j];
            dst[(*lab)[i]] -= g;
        }
    };
    Tensor t;
    t.node_ = op_node({1}, {loss}, {ln}, backward);
    return t;
}

Tensor cross_entropy_soft(const Tensor& logits, const Tensor& targets) {
    require_2d(logits, "cross_entropy_soft");
    require_same_shape(logits, targets, "cross_entropy_soft");
    const int b = logits.shape()[0], c = logits.shape()[1];

    double loss = 0.0;
    const auto& z = logits.data();
    const auto& tg = targets.data();
    for (int i = 0; i < b; ++i) {
        const double* row = z.data() + static_cast<std::size_t>(i) * c;
        const double* trow = tg.data() + static_cast<std::size_t>(i) * c;
        const double lse = row_lse(row, c);
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += trow[j] * row[j];
        loss += lse - dot;
    }
    loss /= b;

    auto ln = logits.node_;
    auto tn = targets.node_;
    auto backward = [ln, tn, b, c](Node& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double g = self.grad[0] / b;
        std::vector<double> p(static_cast<std::size_t>(b) * c);
        softmax_rows_raw(ln->data.data(), b, c, p.data());
        for (std::size_t i = 0; i < p.size(); ++i)
            ln->grad[i] += g * (p[i] - tn->data[i]);
    };
    Tensor t;
    t.node_ = op_node({1}, {loss}, {ln, tn}, backward);
    return t;
}

Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits, double temperature) {
    require_2d(p_logits, "kl_divergence");
    require_same_shape(p_logits, q_logits, "kl_divergence");
    if (temperature <= 0.0) throw ArgumentError("kl_divergence: temperature must be positive");
    const int b = p_logits.shape()[0], c = p_logits.shape()[1];
    const double inv_t = 1.0 / temperature;

    std::vector<double> zp(p_logits.size()), zq(q_logits.size());
    for (std::size_t i = 0; i < zp.size(); ++i) {
        zp[i] = p_logits.data()[i] * inv_t;
        zq[i] = q_logits.data()[i] * inv_t;
    }
    std::vector<double> p(zp.size()), q(zq.size());
    softmax_rows_raw(zp.data(), b, c, p.data());
    softmax_rows_raw(zq.data(), b, c, q.data());

    double loss = 0.0;
    std::vector<double> row_kl(b, 0.0);
    for (int i = 0; i < b; ++i) {
        double acc = 0.0;
        for (int j = 0; j < c; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * c + j;
            acc += p[k] * (std::log(p[k]) - std::log(q[k]));
        }
        row_kl[i] = acc;
        loss += acc;
    }
    loss /= b;

    auto pn = p_logits.node_, qn = q_logits.node_;
    auto pp = std::make_shared<std::vector<double>>(std::move(p));
    auto qq = std::make_shared<std::vector<double>>(std::move(q));
    auto rk = std::make_shared<std::vector<double>>(std::move(row_kl));
    auto backward = [pn, qn, pp, qq, rk, b, c, inv_t](Node& self) {
        const double g = self.grad[0] * inv_t / b;
        if (pn->requires_grad) {
            pn->ensure_grad();
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < c; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * c + j;
                    const double diff = std::log((*pp)[k]) - std::log((*qq)[k]);
                    pn->grad[k] += g * (*pp)[k] * (diff - (*rk)[i]);
                }
        }
        if (qn->requires_grad) {
            qn->ensure_grad();
            for (std::size_t k = 0; k < qq->size(); ++k)
                qn->grad[k] += g * ((*qq)[k] - (*pp)[k]);
        }
    };
    Tensor t;
    t.node_ = op_node({1}, {loss}, {pn, qn}, backward);
    return t;
}

Tensor l2_row_norm_mean(const Tensor& a) {
    require_2d(a, "l2_row_norm_mean");
    const int r = a.shape()[0], c = a.shape()[1];
    std::vector<double> norms(r, 0.0);
    double loss = 0.0;
    for (int i = 0; i < r; ++i) {
        double acc = 0.0;
        const double* row = a.data().data() + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) acc += row[j] * row[j];
        norms[i] = std::sqrt(acc);
        loss += norms[i];
    }
    loss /= r;
    auto an = a.node_;
    auto nm = std::make_shared<std::vector<double>>(std::move(norms));
    auto backward = [an, nm, r, c](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = self.grad[0] / r;
        for (int i = 0; i < r; ++i) {
            const double n = (*nm)[i];
            if (n < 1e-300) continue;  // gradient of the norm is undefined at 0
            const double* row = an->data.data() + static_cast<std::size_t>(i) * c;
            double* dst = an->grad.data() + static_cast<std::size_t>(i) * c;
            for (int j = 0; j < c; ++j) dst[j] += g * row[j] / n;
        }
    };
    Tensor t;
    t.node_ = op_node({1}, {loss}, {an}, backward);
    return t;
}

Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<double>& weights) {
    if (terms.empty() || terms.size() != weights.size())
        throw DimensionError("weighted_sum: term/weight count mismatch");
    double acc = 0.0;
    std::vector<std::shared_ptr<Node>> parents;
    parents.reserve(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].size() != 1) throw DimensionError("weighted_sum: terms must be scalars");
        acc += weights[i] * terms[i].value();
        parents.push_back(terms[i].node_);
    }
    auto w = std::make_shared<std::vector<double>>(weights);
    auto backward = [w](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            auto& p = self.parents[i];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            p->grad[0] += (*w)[i] * self.grad[0];
        }
    };
    Tensor t;
    t.node_ = op_node({1}, {acc}, std::move(parents), backward);
    return t;
}

std::vector<double> softmax_rows(const Tensor& logits) {
    require_2d(logits, "softmax_rows");
    std::vector<double> out(logits.size());
    softmax_rows_raw(logits.data().data(), logits.shape()[0], logits.shape()[1], out.data());
    return out;
}

std::vector<int> argmax_rows(const Tensor& t) {
    require_2d(t, "argmax_rows");
    const int r = t.shape()[0], c = t.shape()[1];
    std::vector<int> out(r, 0);
    for (int i = 0; i < r; ++i) {
        const double* row = t.data().data() + static_cast<std::size_t>(i) * c;
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;
        out[i] = best;
    }
    return out;
}

}  // namespace rfs
