#pragma once

// Reverse-mode autodiff over 2-D tensors. Each op is fused (a whole LSTM cell,
// a whole attention read) and carries its own hand-written backward pass.
// A tape is built once per forward pass and consumed by a single backward().

#include <cmath>
#include <functional>
#include <limits>
#include <unordered_map>
#include <vector>

#include "sqlpar/nn/kernels.hpp"
#include "sqlpar/nn/params.hpp"

namespace sqlpar::nn {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    const Tensor& value(Var v) const {
        const auto& n = nodes_.at(v.id);
        return n.param ? n.param->value : n.value;
    }
    Tensor& grad(Var v) {
        auto& n = nodes_.at(v.id);
        return n.param ? n.param->grad : n.grad;
    }
    double scalar(Var v) const { return value(v).data.at(0); }
    std::size_t size() const { return nodes_.size(); }

    // Inference runs through the same ops on a frozen store; gradients are only
    // written by backward(), so a const parameter is safe until then.
    Var param(const Parameter& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return {it->second};
        Node n;
        n.param = const_cast<Parameter*>(&p);
        nodes_.push_back(std::move(n));
        int id = static_cast<int>(nodes_.size()) - 1;
        param_nodes_[&p] = id;
        return {id};
    }

    Var constant(Tensor t) { return push(std::move(t), nullptr); }

    /// Gathers rows of E by index.
    Var rows(Var E, std::vector<int> ids) {
        const auto& e = value(E);
        Tensor out(ids.size(), e.cols);
        for (std::size_t r = 0; r < ids.size(); ++r) {
            if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= e.rows)
                throw ShapeError("row index " + std::to_string(ids[r]) + " out of range for " + shape_str(e));
            std::copy_n(e.row_ptr(ids[r]), e.cols, out.row_ptr(r));
        }
        return push(std::move(out), [E, ids = std::move(ids)](Tape& t, int self) {
            const auto& g = t.grad({self});
            auto& ge = t.grad(E);
            for (std::size_t r = 0; r < ids.size(); ++r) {
                double* dst = ge.row_ptr(ids[r]);
                const double* src = g.row_ptr(r);
                for (std::size_t c = 0; c < g.cols; ++c) dst[c] += src[c];
            }
        });
    }

    Var concat_cols(std::vector<Var> parts) {
        if (parts.empty()) throw ShapeError("concat of nothing");
        const std::size_t R = value(parts[0]).rows;
        std::size_t C = 0;
        for (auto p : parts) {
            if (value(p).rows != R) throw ShapeError("concat_cols row mismatch");
            C += value(p).cols;
        }
        Tensor out(R, C);
        std::size_t off = 0;
        for (auto p : parts) {
            const auto& v = value(p);
            for (std::size_t r = 0; r < R; ++r) std::copy_n(v.row_ptr(r), v.cols, out.row_ptr(r) + off);
            off += v.cols;
        }
        return push(std::move(out), [parts = std::move(parts)](Tape& t, int self) {
            const auto& g = t.grad({self});
            std::size_t off = 0;
            for (auto p : parts) {
                auto& gp = t.grad(p);
                for (std::size_t r = 0; r < gp.rows; ++r)
                    for (std::size_t c = 0; c < gp.cols; ++c) gp.at(r, c) += g.at(r, off + c);
                off += gp.cols;
            }
        });
    }

    Var slice_cols(Var X, std::size_t start, std::size_t len) {
        const auto& x = value(X);
        if (start + len > x.cols) throw ShapeError("slice_cols out of range for " + shape_str(x));
        Tensor out(x.rows, len);
        for (std::size_t r = 0; r < x.rows; ++r) std::copy_n(x.row_ptr(r) + start, len, out.row_ptr(r));
        return push(std::move(out), [X, start, len](Tape& t, int self) {
            const auto& g = t.grad({self});
            auto& gx = t.grad(X);
            for (std::size_t r = 0; r < g.rows; ++r)
                for (std::size_t c = 0; c < len; ++c) gx.at(r, start + c) += g.at(r, c);
        });
    }

    Var slice_row(Var X, std::size_t r) {
        const auto& x = value(X);
        if (r >= x.rows) throw ShapeError("slice_row out of range for " + shape_str(x));
        Tensor out(1, x.cols);
        std::copy_n(x.row_ptr(r), x.cols, out.data.data());
        return push(std::move(out), [X, r](Tape& t, int self) {
            const auto& g = t.grad({self});
            auto& gx = t.grad(X);
            for (std::size_t c = 0; c < g.cols; ++c) gx.at(r, c) += g.data[c];
        });
    }

    Var stack_rows(std::vector<Var> parts) {
        if (parts.empty()) throw ShapeError("stack of nothing");
        const std::size_t C = value(parts[0]).cols;
        std::size_t R = 0;
        for (auto p : parts) {
            if (value(p).cols != C) throw ShapeError("stack_rows column mismatch");
            R += value(p).rows;
        }
        Tensor out(R, C);
        std::size_t off = 0;
        for (auto p : parts) {
            const auto& v = value(p);
            std::copy(v.data.begin(), v.data.end(), out.row_ptr(off));
            off += v.rows;
        }
        return push(std::move(out), [parts = std::move(parts)](Tape& t, int self) {
            const auto& g = t.grad({self});
            std::size_t off = 0;
            for (auto p : parts) {
                auto& gp = t.grad(p);
                const double* src = g.row_ptr(off);
                for (std::size_t i = 0; i < gp.size(); ++i) gp.data[i] += src[i];
                off += gp.rows;
            }
        });
    }

    /// Y = X W^T + b, row by row. W is out x in; b is 1 x out or absent.
    Var affine(Var X, Var W, Var b = {}) {
        const auto& x = value(X);
        const auto& w = value(W);
        if (x.cols != w.cols)
            throw ShapeError("affine: input " + shape_str(x) + " does not match weight " + shape_str(w));
        if (b.valid() && (value(b).rows != 1 || value(b).cols != w.rows)) throw ShapeError("affine: bias shape");
        Tensor out(x.rows, w.rows);
        std::vector<const double*> xs(x.rows);
        std::vector<double*> ys(x.rows);
        for (std::size_t r = 0; r < x.rows; ++r) {
            xs[r] = x.row_ptr(r);
            ys[r] = out.row_ptr(r);
        }
        affine_rows(xs, w, b.valid() ? value(b).data.data() : nullptr, ys);
        return push(std::move(out), [X, W, b](Tape& t, int self) {
            const auto& g = t.grad({self});
            const auto& x = t.value(X);
            const auto& w = t.value(W);
            auto& gx = t.grad(X);
            auto& gw = t.grad(W);
            for (std::size_t r = 0; r < g.rows; ++r) {
                const double* gr = g.row_ptr(r);
                const double* xr = x.row_ptr(r);
                double* gxr = gx.row_ptr(r);
                for (std::size_t o = 0; o < g.cols; ++o) {
                    const double go = gr[o];
                    if (go == 0.0) continue;
                    const double* wo = w.row_ptr(o);
                    double* gwo = gw.row_ptr(o);
                    for (std::size_t j = 0; j < w.cols; ++j) {
                        gxr[j] += go * wo[j];
                        gwo[j] += go * xr[j];
                    }
                }
            }
            if (b.valid()) {
                auto& gb = t.grad(b);
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t o = 0; o < g.cols; ++o) gb.data[o] += g.at(r, o);
            }
        });
    }

    /// LSTM cell; gates are pre-activations [i|f|g|o] (rows x 4H). Output is [c | h] (rows x 2H).
    Var lstm(Var gates, Var c_prev) {
        const auto& a = value(gates);
        const auto& cp = value(c_prev);
        const std::size_t H = cp.cols;
        if (a.cols != 4 * H || a.rows != cp.rows) throw ShapeError("lstm: gate/state shape mismatch");
        Tensor out(a.rows, 2 * H);
        for (std::size_t r = 0; r < a.rows; ++r)
            lstm_cell(a.row_ptr(r), cp.row_ptr(r), H, out.row_ptr(r), out.row_ptr(r) + H);
        return push(std::move(out), [gates, c_prev, H](Tape& t, int self) {
            const auto& g = t.grad({self});
            const auto& out = t.value({self});
            const auto& a = t.value(gates);
            const auto& cp = t.value(c_prev);
            auto& ga = t.grad(gates);
            auto& gcp = t.grad(c_prev);
            for (std::size_t r = 0; r < a.rows; ++r) {
                const double* ar = a.row_ptr(r);
                for (std::size_t k = 0; k < H; ++k) {
                    const double i = sigmoid(ar[k]);
                    const double f = sigmoid(ar[H + k]);
                    const double gg = std::tanh(ar[2 * H + k]);
                    const double o = sigmoid(ar[3 * H + k]);
                    const double c = out.at(r, k);
                    const double tc = std::tanh(c);
                    const double dh = g.at(r, H + k);
                    const double dc = g.at(r, k) + dh * o * (1 - tc * tc);
                    ga.at(r, k) += dc * gg * i * (1 - i);
                    ga.at(r, H + k) += dc * cp.at(r, k) * f * (1 - f);
                    ga.at(r, 2 * H + k) += dc * i * (1 - gg * gg);
                    ga.at(r, 3 * H + k) += dh * tc * o * (1 - o);
                    gcp.at(r, k) += dc * f;
                }
            }
        });
    }

    /// Attention of h (1 x H) over M (n x D) through Wm (H x D). Output is [z | p] (1 x (D + n)).
    Var attention(Var h, Var M, Var Wm) {
        const auto& hv = value(h);
        const auto& m = value(M);
        const auto& w = value(Wm);
        if (m.rows == 0) throw ShapeError("attention over empty memory");
        if (hv.rows != 1 || hv.cols != w.rows || m.cols != w.cols)
            throw ShapeError("attention: h " + shape_str(hv) + ", M " + shape_str(m) + ", Wm " + shape_str(w));
        const std::size_t D = m.cols, n = m.rows;
        Tensor out(1, D + n);
        std::vector<double> u(D);
        nn::attention(hv.data.data(), m, w, u.data(), out.data.data() + D, out.data.data());
        return push(std::move(out), [h, M, Wm, D, n, u = std::move(u)](Tape& t, int self) {
            const auto& g = t.grad({self});
            const auto& out = t.value({self});
            const auto& m = t.value(M);
            const auto& hv = t.value(h);
            const double* dz = g.data.data();
            const double* p = out.data.data() + D;
            std::vector<double> dp(n), ds(n), du(D, 0.0);
            double pdp = 0;
            for (std::size_t i = 0; i < n; ++i) {
                dp[i] = g.data[D + i] + dot(dz, m.row_ptr(i), D);
                pdp += p[i] * dp[i];
            }
            auto& gm = t.grad(M);
            for (std::size_t i = 0; i < n; ++i) {
                ds[i] = p[i] * (dp[i] - pdp);
                const double* mi = m.row_ptr(i);
                double* gmi = gm.row_ptr(i);
                for (std::size_t d = 0; d < D; ++d) {
                    gmi[d] += p[i] * dz[d] + ds[i] * u[d];
                    du[d] += ds[i] * mi[d];
                }
            }
            const auto& w = t.value(Wm);
            auto& gw = t.grad(Wm);
            auto& gh = t.grad(h);
            for (std::size_t k = 0; k < w.rows; ++k) {
                gh.data[k] += dot(du.data(), w.row_ptr(k), D);
                double* gwk = gw.row_ptr(k);
                for (std::size_t d = 0; d < D; ++d) gwk[d] += hv.data[k] * du[d];
            }
        });
    }

    /// s_i = q . K_i for q (1 x D), K (k x D).
    Var dot_rows(Var q, Var K) {
        const auto& qv = value(q);
        const auto& kv = value(K);
        if (qv.rows != 1 || qv.cols != kv.cols) throw ShapeError("dot_rows: q " + shape_str(qv) + ", K " + shape_str(kv));
        Tensor out(1, kv.rows);
        for (std::size_t i = 0; i < kv.rows; ++i) out.data[i] = dot(qv.data.data(), kv.row_ptr(i), kv.cols);
        return push(std::move(out), [q, K](Tape& t, int self) {
            const auto& g = t.grad({self});
            const auto& qv = t.value(q);
            const auto& kv = t.value(K);
            auto& gq = t.grad(q);
            auto& gk = t.grad(K);
            for (std::size_t i = 0; i < kv.rows; ++i) {
                const double gi = g.data[i];
                for (std::size_t d = 0; d < kv.cols; ++d) {
                    gq.data[d] += gi * kv.at(i, d);
                    gk.at(i, d) += gi * qv.data[d];
                }
            }
        });
    }

    Var add(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        if (!av.same_shape(bv)) throw ShapeError("add: " + shape_str(av) + " vs " + shape_str(bv));
        Tensor out = av;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
        return push(std::move(out), [a, b](Tape& t, int self) {
            const auto& g = t.grad({self});
            auto& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
            auto& gb = t.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
        });
    }

    Var scale(Var a, double k) {
        Tensor out = value(a);
        for (double& v : out.data) v *= k;
        return push(std::move(out), [a, k](Tape& t, int self) {
            const auto& g = t.grad({self});
            auto& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += k * g.data[i];
        });
    }

    Var mean_rows(Var X) {
        const auto& x = value(X);
        if (x.rows == 0) throw ShapeError("mean of zero rows");
        Tensor out(1, x.cols);
        for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t c = 0; c < x.cols; ++c) out.data[c] += x.at(r, c);
        for (double& v : out.data) v /= static_cast<double>(x.rows);
        return push(std::move(out), [X](Tape& t, int self) {
            const auto& g = t.grad({self});
            auto& gx = t.grad(X);
            const double k = 1.0 / static_cast<double>(gx.rows);
            for (std::size_t r = 0; r < gx.rows; ++r)
                for (std::size_t c = 0; c < gx.cols; ++c) gx.at(r, c) += k * g.data[c];
        });
    }

    /// -log softmax(logits restricted to candidates)[target]; target is a position in logits.
    Var masked_nll(Var logits, std::vector<int> candidates, int target) {
        const auto& l = value(logits);
        if (candidates.empty()) throw ShapeError("masked_nll: empty candidate set");
        if (std::find(candidates.begin(), candidates.end(), target) == candidates.end())
            throw ShapeError("masked_nll: target " + std::to_string(target) + " outside candidate set");
        std::vector<double> p(candidates.size());
        for (std::size_t i = 0; i < candidates.size(); ++i) p[i] = l.data.at(candidates[i]);
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : p) mx = std::max(mx, v);
        double sum = 0;
        for (double v : p) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        Tensor out(1, 1, lse - l.data[target]);
        softmax(p.data(), p.size());
        return push(std::move(out), [logits, candidates = std::move(candidates), target, p = std::move(p)](Tape& t,
                                                                                                            int self) {
            const double g = t.grad({self}).data[0];
            auto& gl = t.grad(logits);
            for (std::size_t i = 0; i < candidates.size(); ++i)
                gl.data[candidates[i]] += g * (p[i] - (candidates[i] == target ? 1.0 : 0.0));
        });
    }

    /// sum_i (target_i - p_i)^2.
    Var sq_dist(Var p, std::vector<double> target) {
        const auto& pv = value(p);
        if (pv.size() != target.size()) throw ShapeError("sq_dist length mismatch");
        double s = 0;
        for (std::size_t i = 0; i < target.size(); ++i) {
            const double d = target[i] - pv.data[i];
            s += d * d;
        }
        return push(Tensor(1, 1, s), [p, target = std::move(target)](Tape& t, int self) {
            const double g = t.grad({self}).data[0];
            const auto& pv = t.value(p);
            auto& gp = t.grad(p);
            for (std::size_t i = 0; i < target.size(); ++i) gp.data[i] += -2.0 * (target[i] - pv.data[i]) * g;
        });
    }

    /// sum_i w_i * s_i over scalar vars.
    Var weighted_sum(std::vector<Var> xs, std::vector<double> w) {
        if (xs.size() != w.size()) throw ShapeError("weighted_sum length mismatch");
        double s = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (value(xs[i]).size() != 1) throw ShapeError("weighted_sum expects scalars");
            s += w[i] * scalar(xs[i]);
        }
        return push(Tensor(1, 1, s), [xs = std::move(xs), w = std::move(w)](Tape& t, int self) {
            const double g = t.grad({self}).data[0];
            for (std::size_t i = 0; i < xs.size(); ++i) t.grad(xs[i]).data[0] += w[i] * g;
        });
    }

    Var sum(std::vector<Var> xs) {
        std::vector<double> ones(xs.size(), 1.0);
        return weighted_sum(std::move(xs), std::move(ones));
    }

    /// Accumulates d(loss)/d(everything) into parameter grads. Call once per tape.
    void backward(Var loss) {
        auto& g = grad(loss);
        if (g.size() != 1) throw ShapeError("backward needs a scalar loss");
        if (!std::isfinite(scalar(loss))) throw std::runtime_error("non-finite loss");
        g.data[0] += 1.0;
        for (int i = loss.id; i >= 0; --i)
            if (nodes_[i].backward) nodes_[i].backward(*this, i);
    }

private:
    using Backward = std::function<void(Tape&, int)>;
    struct Node {
        Tensor value;
        Tensor grad;
        Parameter* param = nullptr;
        Backward backward;
    };

    Var push(Tensor v, Backward bw) {
        Node n;
        n.grad = Tensor(v.rows, v.cols);
        n.value = std::move(v);
        n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_nodes_;
};

}  // namespace sqlpar::nn
