#include "cyclemae/autograd.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cyclemae::ad {

Tape::Tape(const ParamSet* params) : params_(params) {
    if (params_ != nullptr) {
        param_nodes_.assign(params_->size(), -1);
    }
}

const Tape::Node& Tape::node(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw std::out_of_range("ad::Tape: invalid Var");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::constant(Mat value) {
    return push(std::move(value), false, {});
}

Var Tape::param(std::size_t index) {
    if (params_ == nullptr || index >= params_->size()) {
        throw std::out_of_range("ad::Tape::param: no such parameter");
    }
    if (param_nodes_[index] >= 0) {
        return Var{param_nodes_[index]};
    }
    Node n;
    n.ref = &(*params_)[index].value;
    n.param = static_cast<std::int64_t>(index);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    const auto id = static_cast<std::int32_t>(nodes_.size() - 1);
    param_nodes_[index] = id;
    return Var{id};
}

const Mat& Tape::value(Var v) const {
    const Node& n = node(v);
    return n.ref != nullptr ? *n.ref : n.value;
}

const Mat& Tape::grad(Var v) const { return node(v).grad; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Var Tape::push(Mat value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) {
        n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Mat& Tape::grad_ref(Var v) {
    Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    if (n.grad.size() == 0) {
        const Mat& val = n.ref != nullptr ? *n.ref : n.value;
        n.grad = Mat::Zero(val.rows(), val.cols());
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    const Mat& v = value(loss);
    if (v.rows() != 1 || v.cols() != 1) {
        throw std::invalid_argument("ad::Tape::backward: loss must be 1x1");
    }
    if (!requires_grad(loss)) {
        return;
    }
    grad_ref(loss)(0, 0) += 1.0;
    for (std::int32_t id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.backward || n.grad.size() == 0) {
            continue;
        }
        // The closure may grow other nodes' buffers but never this one.
        n.backward(*this, n.grad);
    }
}

void Tape::accumulate(Gradients& out) const {
    for (const Node& n : nodes_) {
        if (n.param >= 0 && n.grad.size() > 0) {
            out[static_cast<std::size_t>(n.param)] += n.grad;
        }
    }
}

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
}

void check_row(const Mat& a, const Mat& row, const char* op) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw std::invalid_argument(std::string(op) + ": expected a 1x" +
                                    std::to_string(a.cols()) + " row");
    }
}

Mat scalar(double x) {
    Mat m(1, 1);
    m(0, 0) = x;
    return m;
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
    const Mat& A = t.value(a);
    const Mat& B = t.value(b);
    if (A.cols() != B.rows()) {
        throw std::invalid_argument("matmul: inner dimension mismatch");
    }
    Mat out = A * B;
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.push(std::move(out), rg, [a, b](Tape& tp, const Mat& g) {
        if (tp.requires_grad(a)) {
            tp.grad_ref(a).noalias() += g * tp.value(b).transpose();
        }
        if (tp.requires_grad(b)) {
            tp.grad_ref(b).noalias() += tp.value(a).transpose() * g;
        }
    });
}

Var matmul_bt(Tape& t, Var a, Var b) {
    const Mat& A = t.value(a);
    const Mat& B = t.value(b);
    if (A.cols() != B.cols()) {
        throw std::invalid_argument("matmul_bt: inner dimension mismatch");
    }
    Mat out = A * B.transpose();
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.push(std::move(out), rg, [a, b](Tape& tp, const Mat& g) {
        if (tp.requires_grad(a)) {
            tp.grad_ref(a).noalias() += g * tp.value(b);
        }
        if (tp.requires_grad(b)) {
            tp.grad_ref(b).noalias() += g.transpose() * tp.value(a);
        }
    });
}

Var add(Tape& t, Var a, Var b) {
    check_same_shape(t.value(a), t.value(b), "add");
    Mat out = t.value(a) + t.value(b);
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.push(std::move(out), rg, [a, b](Tape& tp, const Mat& g) {
        if (tp.requires_grad(a)) {
            tp.grad_ref(a) += g;
        }
        if (tp.requires_grad(b)) {
            tp.grad_ref(b) += g;
        }
    });
}

Var add_row(Tape& t, Var a, Var row) {
    const Mat& A = t.value(a);
    const Mat& r = t.value(row);
    check_row(A, r, "add_row");
    Mat out = A.rowwise() + r.row(0);
    const bool rg = t.requires_grad(a) || t.requires_grad(row);
    return t.push(std::move(out), rg, [a, row](Tape& tp, const Mat& g) {
        if (tp.requires_grad(a)) {
            tp.grad_ref(a) += g;
        }
        if (tp.requires_grad(row)) {
            tp.grad_ref(row) += g.colwise().sum();
        }
    });
}

Var affine(Tape& t, Var x, Var w, Var b) {
    const Mat& X = t.value(x);
    const Mat& W = t.value(w);
    const Mat& B = t.value(b);
    if (X.cols() != W.rows()) {
        throw std::invalid_argument("affine: input width " + std::to_string(X.cols()) +
                                    " does not match weight rows " + std::to_string(W.rows()));
    }
    if (B.rows() != 1 || B.cols() != W.cols()) {
        throw std::invalid_argument("affine: bias must be 1x" + std::to_string(W.cols()));
    }
    Mat out = X * W;
    out.rowwise() += B.row(0);
    const bool rg = t.requires_grad(x) || t.requires_grad(w) || t.requires_grad(b);
    return t.push(std::move(out), rg, [x, w, b](Tape& tp, const Mat& g) {
        if (tp.requires_grad(x)) {
            tp.grad_ref(x).noalias() += g * tp.value(w).transpose();
        }
        if (tp.requires_grad(w)) {
            tp.grad_ref(w).noalias() += tp.value(x).transpose() * g;
        }
        if (tp.requires_grad(b)) {
            tp.grad_ref(b) += g.colwise().sum();
        }
    });
}

Var scale(Tape& t, Var a, double s) {
    Mat out = t.value(a) * s;
    return t.push(std::move(out), t.requires_grad(a),
                  [a, s](Tape& tp, const Mat& g) { tp.grad_ref(a) += g * s; });
}

Var sum(Tape& t, std::span<const Var> terms) {
    if (terms.empty()) {
        throw std::invalid_argument("sum: no terms");
    }
    Mat out = t.value(terms[0]);
    bool rg = t.requires_grad(terms[0]);
    for (std::size_t i = 1; i < terms.size(); ++i) {
        check_same_shape(out, t.value(terms[i]), "sum");
        out += t.value(terms[i]);
        rg = rg || t.requires_grad(terms[i]);
    }
    std::vector<Var> ins(terms.begin(), terms.end());
    return t.push(std::move(out), rg, [ins](Tape& tp, const Mat& g) {
        for (const Var v : ins) {
            if (tp.requires_grad(v)) {
                tp.grad_ref(v) += g;
            }
        }
    });
}

Var detach(Tape& t, Var a) { return t.constant(t.value(a)); }

Var gelu(Tape& t, Var a) {
    const Mat& X = t.value(a);
    Mat out(X.rows(), X.cols());
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    for (Eigen::Index i = 0; i < X.size(); ++i) {
        const double x = X.data()[i];
        out.data()[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    return t.push(std::move(out), t.requires_grad(a), [a, inv_sqrt2](Tape& tp, const Mat& g) {
        const Mat& Xv = tp.value(a);
        Mat& ga = tp.grad_ref(a);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (Eigen::Index i = 0; i < Xv.size(); ++i) {
            const double x = Xv.data()[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            ga.data()[i] += g.data()[i] * (cdf + x * pdf);
        }
    });
}

Var relu(Tape& t, Var a) {
    Mat out = t.value(a).cwiseMax(0.0);
    return t.push(std::move(out), t.requires_grad(a), [a](Tape& tp, const Mat& g) {
        const Mat& X = tp.value(a);
        Mat& ga = tp.grad_ref(a);
        for (Eigen::Index i = 0; i < X.size(); ++i) {
            if (X.data()[i] > 0.0) {
                ga.data()[i] += g.data()[i];
            }
        }
    });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
    const Mat& X = t.value(x);
    const Mat& G = t.value(gamma);
    const Mat& B = t.value(beta);
    check_row(X, G, "layer_norm");
    check_row(X, B, "layer_norm");
    const Eigen::Index n = X.cols();
    auto xhat = std::make_shared<Mat>(X.rows(), n);
    auto rstd = std::make_shared<Eigen::VectorXd>(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        const double mean = X.row(r).mean();
        const double var = (X.row(r).array() - mean).square().mean();
        (*rstd)(r) = 1.0 / std::sqrt(var + eps);
        xhat->row(r) = (X.row(r).array() - mean) * (*rstd)(r);
    }
    Mat out = xhat->array().rowwise() * G.row(0).array();
    out.rowwise() += B.row(0);
    const bool rg = t.requires_grad(x) || t.requires_grad(gamma) || t.requires_grad(beta);
    return t.push(std::move(out), rg, [x, gamma, beta, xhat, rstd](Tape& tp, const Mat& g) {
        if (tp.requires_grad(gamma)) {
            tp.grad_ref(gamma) += (g.array() * xhat->array()).colwise().sum().matrix();
        }
        if (tp.requires_grad(beta)) {
            tp.grad_ref(beta) += g.colwise().sum();
        }
        if (tp.requires_grad(x)) {
            const Mat& Gm = tp.value(gamma);
            Mat& gx = tp.grad_ref(x);
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                const Eigen::RowVectorXd dxhat = g.row(r).array() * Gm.row(0).array();
                const double m1 = dxhat.mean();
                const double m2 = (dxhat.array() * xhat->row(r).array()).mean();
                gx.row(r).array() +=
                    (*rstd)(r) * (dxhat.array() - m1 - xhat->row(r).array() * m2);
            }
        }
    });
}

Var attention(Tape& t, Var qkv, int heads) {
    const Mat& X = t.value(qkv);
    if (heads < 1 || X.cols() % (3 * heads) != 0) {
        throw std::invalid_argument("attention: packed width " + std::to_string(X.cols()) +
                                    " is not 3 * heads * head_dim");
    }
    const Eigen::Index L = X.rows();
    const Eigen::Index D = X.cols() / 3;
    const Eigen::Index dh = D / heads;
    const double s = 1.0 / std::sqrt(static_cast<double>(dh));
    auto probs = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(heads));
    Mat out(L, D);
    for (int h = 0; h < heads; ++h) {
        const auto Q = X.block(0, h * dh, L, dh);
        const auto K = X.block(0, D + h * dh, L, dh);
        const auto V = X.block(0, 2 * D + h * dh, L, dh);
        Mat P = (Q * K.transpose()) * s;
        for (Eigen::Index r = 0; r < L; ++r) {
            const double mx = P.row(r).maxCoeff();
            P.row(r) = (P.row(r).array() - mx).exp();
            P.row(r) /= P.row(r).sum();
        }
        out.block(0, h * dh, L, dh).noalias() = P * V;
        (*probs)[static_cast<std::size_t>(h)] = std::move(P);
    }
    return t.push(std::move(out), t.requires_grad(qkv),
                  [qkv, heads, D, dh, s, probs](Tape& tp, const Mat& g) {
                      const Mat& Xv = tp.value(qkv);
                      Mat& gx = tp.grad_ref(qkv);
                      const Eigen::Index L = Xv.rows();
                      for (int h = 0; h < heads; ++h) {
                          const Mat& P = (*probs)[static_cast<std::size_t>(h)];
                          const auto Q = Xv.block(0, h * dh, L, dh);
                          const auto K = Xv.block(0, D + h * dh, L, dh);
                          const auto V = Xv.block(0, 2 * D + h * dh, L, dh);
                          const auto dO = g.block(0, h * dh, L, dh);
                          gx.block(0, 2 * D + h * dh, L, dh).noalias() += P.transpose() * dO;
                          Mat dP = dO * V.transpose();
                          const Eigen::VectorXd rowdot = (dP.array() * P.array()).rowwise().sum();
                          Mat dS = (P.array() * (dP.array().colwise() - rowdot.array())).matrix();
                          gx.block(0, h * dh, L, dh).noalias() += s * (dS * K);
                          gx.block(0, D + h * dh, L, dh).noalias() += s * (dS.transpose() * Q);
                      }
                  });
}

Var l2_normalize_rows(Tape& t, Var a) {
    const Mat& X = t.value(a);
    auto norms = std::make_shared<Eigen::VectorXd>(X.rowwise().norm());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        if (!((*norms)(r) > 0.0)) {
            throw std::invalid_argument("l2_normalize_rows: row " + std::to_string(r) +
                                        " has zero norm");
        }
    }
    Mat out = X.array().colwise() / norms->array();
    auto y = std::make_shared<Mat>(out);
    return t.push(std::move(out), t.requires_grad(a), [a, norms, y](Tape& tp, const Mat& g) {
        Mat& ga = tp.grad_ref(a);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const double proj = y->row(r).dot(g.row(r));
            ga.row(r) += (g.row(r) - proj * y->row(r)) / (*norms)(r);
        }
    });
}

Var gather_rows(Tape& t, Var a, std::span<const int> rows) {
    const Mat& A = t.value(a);
    Mat out(static_cast<Eigen::Index>(rows.size()), A.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] < 0 || rows[k] >= A.rows()) {
            throw std::out_of_range("gather_rows: row " + std::to_string(rows[k]) +
                                    " out of range");
        }
        out.row(static_cast<Eigen::Index>(k)) = A.row(rows[k]);
    }
    std::vector<int> idx(rows.begin(), rows.end());
    return t.push(std::move(out), t.requires_grad(a), [a, idx](Tape& tp, const Mat& g) {
        Mat& ga = tp.grad_ref(a);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            ga.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
        }
    });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_rows: no parts");
    }
    const Eigen::Index cols = t.value(parts[0]).cols();
    Eigen::Index total = 0;
    bool rg = false;
    for (const Var p : parts) {
        if (t.value(p).cols() != cols) {
            throw std::invalid_argument("concat_rows: column mismatch");
        }
        total += t.value(p).rows();
        rg = rg || t.requires_grad(p);
    }
    Mat out(total, cols);
    Eigen::Index offset = 0;
    for (const Var p : parts) {
        const Mat& v = t.value(p);
        out.middleRows(offset, v.rows()) = v;
        offset += v.rows();
    }
    std::vector<Var> ins(parts.begin(), parts.end());
    return t.push(std::move(out), rg, [ins](Tape& tp, const Mat& g) {
        Eigen::Index off = 0;
        for (const Var p : ins) {
            const Eigen::Index r = tp.value(p).rows();
            if (tp.requires_grad(p)) {
                tp.grad_ref(p) += g.middleRows(off, r);
            }
            off += r;
        }
    });
}

Var assemble_rows(Tape& t, Var visible, Var fill, std::span<const int> positions, int total) {
    const Mat& V = t.value(visible);
    const Mat& F = t.value(fill);
    check_row(V, F, "assemble_rows");
    if (static_cast<Eigen::Index>(positions.size()) != V.rows()) {
        throw std::invalid_argument("assemble_rows: one position per visible row required");
    }
    std::vector<char> taken(static_cast<std::size_t>(total), 0);
    Mat out(total, V.cols());
    for (std::size_t k = 0; k < positions.size(); ++k) {
        const int p = positions[k];
        if (p < 0 || p >= total || taken[static_cast<std::size_t>(p)]) {
            throw std::invalid_argument("assemble_rows: invalid or repeated position " +
                                        std::to_string(p));
        }
        taken[static_cast<std::size_t>(p)] = 1;
        out.row(p) = V.row(static_cast<Eigen::Index>(k));
    }
    for (int r = 0; r < total; ++r) {
        if (!taken[static_cast<std::size_t>(r)]) {
            out.row(r) = F.row(0);
        }
    }
    std::vector<int> pos(positions.begin(), positions.end());
    const bool rg = t.requires_grad(visible) || t.requires_grad(fill);
    return t.push(std::move(out), rg,
                  [visible, fill, pos, taken = std::move(taken)](Tape& tp, const Mat& g) {
                      if (tp.requires_grad(visible)) {
                          Mat& gv = tp.grad_ref(visible);
                          for (std::size_t k = 0; k < pos.size(); ++k) {
                              gv.row(static_cast<Eigen::Index>(k)) += g.row(pos[k]);
                          }
                      }
                      if (tp.requires_grad(fill)) {
                          Mat& gf = tp.grad_ref(fill);
                          for (Eigen::Index r = 0; r < g.rows(); ++r) {
                              if (!taken[static_cast<std::size_t>(r)]) {
                                  gf.row(0) += g.row(r);
                              }
                          }
                      }
                  });
}

Var mean_rows(Tape& t, Var a) {
    const Mat& A = t.value(a);
    if (A.rows() == 0) {
        throw std::invalid_argument("mean_rows: empty input");
    }
    Mat out = A.colwise().mean();
    const double inv = 1.0 / static_cast<double>(A.rows());
    return t.push(std::move(out), t.requires_grad(a), [a, inv](Tape& tp, const Mat& g) {
        Mat& ga = tp.grad_ref(a);
        ga.rowwise() += g.row(0) * inv;
    });
}

Var row_distance(Tape& t, Var a, int i, int j) {
    const Mat& A = t.value(a);
    if (i < 0 || j < 0 || i >= A.rows() || j >= A.rows()) {
        throw std::out_of_range("row_distance: row index out of range");
    }
    const Eigen::RowVectorXd diff = A.row(i) - A.row(j);
    const double d = diff.norm();
    return t.push(scalar(d), t.requires_grad(a), [a, i, j, diff, d](Tape& tp, const Mat& g) {
        if (d == 0.0) {
            return;
        }
        Mat& ga = tp.grad_ref(a);
        const Eigen::RowVectorXd step = diff * (g(0, 0) / d);
        ga.row(i) += step;
        ga.row(j) -= step;
    });
}

Var mse(Tape& t, Var pred, const Mat& target) {
    const Mat& P = t.value(pred);
    check_same_shape(P, target, "mse");
    if (P.size() == 0) {
        throw std::invalid_argument("mse: empty input");
    }
    auto diff = std::make_shared<Mat>(P - target);
    const double n = static_cast<double>(P.size());
    const double value = diff->squaredNorm() / n;
    return t.push(scalar(value), t.requires_grad(pred), [pred, diff, n](Tape& tp, const Mat& g) {
        tp.grad_ref(pred) += (*diff) * (2.0 * g(0, 0) / n);
    });
}

Var grouped_cross_entropy(Tape& t, Var logits, std::span<const int> labels, int classes,
                          int groups) {
    const Mat& Z = t.value(logits);
    if (classes < 1 || groups < 1 || Z.cols() != static_cast<Eigen::Index>(classes) * groups) {
        throw std::invalid_argument("grouped_cross_entropy: logits width must be classes*groups");
    }
    if (static_cast<Eigen::Index>(labels.size()) != Z.rows() * groups) {
        throw std::invalid_argument("grouped_cross_entropy: label count mismatch");
    }
    const double count = static_cast<double>(labels.size());
    auto softmax = std::make_shared<Mat>(Z.rows(), Z.cols());
    double total = 0.0;
    for (Eigen::Index r = 0; r < Z.rows(); ++r) {
        for (int q = 0; q < groups; ++q) {
            const int y = labels[static_cast<std::size_t>(r * groups + q)];
            if (y < 0 || y >= classes) {
                throw std::out_of_range("grouped_cross_entropy: label " + std::to_string(y) +
                                        " outside [0, classes)");
            }
            double mx = Z(r, q);
            for (int k = 1; k < classes; ++k) {
                mx = std::max(mx, Z(r, k * groups + q));
            }
            double denom = 0.0;
            for (int k = 0; k < classes; ++k) {
                const double e = std::exp(Z(r, k * groups + q) - mx);
                (*softmax)(r, k * groups + q) = e;
                denom += e;
            }
            for (int k = 0; k < classes; ++k) {
                (*softmax)(r, k * groups + q) /= denom;
            }
            total += std::log(denom) + mx - Z(r, y * groups + q);
        }
    }
    std::vector<int> lab(labels.begin(), labels.end());
    return t.push(scalar(total / count), t.requires_grad(logits),
                  [logits, softmax, lab, groups, count](Tape& tp, const Mat& g) {
                      Mat& gz = tp.grad_ref(logits);
                      const double w = g(0, 0) / count;
                      gz += (*softmax) * w;
                      for (Eigen::Index r = 0; r < gz.rows(); ++r) {
                          for (int q = 0; q < groups; ++q) {
                              const int y = lab[static_cast<std::size_t>(r * groups + q)];
                              gz(r, y * groups + q) -= w;
                          }
                      }
                  });
}

}  // namespace cyclemae::ad
