#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "posmask/array.hpp"

namespace posmask {

class Tape;

// Handle into a Tape. Cheap to copy; valid for the lifetime of the tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over a linear tape. Nodes are created in
// topological order, so backward() is a single reverse sweep.
class Tape {
  public:
    struct Node {
        Array value;
        Array grad;  // allocated lazily, zero until backward touches it
        std::function<void(Tape&, Node&)> backward;
    };

    Var leaf(Array v) {
        nodes_.push_back(Node{std::move(v), Array{}, nullptr});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Array& value(Var v) const { return nodes_[v.id].value; }
    Array& grad(Var v) { return ensure_grad(v.id); }
    bool has_grad(Var v) const { return !nodes_[v.id].grad.data.empty(); }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        check_same_shape("add", a, b);
        Array out = value(a);
        const Array& vb = value(b);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += vb.data[i];
        return make(std::move(out), [a, b](Tape& t, Node& n) {
            t.accumulate(a, n.grad);
            t.accumulate(b, n.grad);
        });
    }

    Var sub(Var a, Var b) {
        check_same_shape("sub", a, b);
        Array out = value(a);
        const Array& vb = value(b);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= vb.data[i];
        return make(std::move(out), [a, b](Tape& t, Node& n) {
            t.accumulate(a, n.grad);
            Array neg = n.grad;
            for (auto& x : neg.data) x = -x;
            t.accumulate(b, neg);
        });
    }

    Var mul(Var a, Var b) {
        check_same_shape("mul", a, b);
        Array out = value(a);
        const Array& vb = value(b);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= vb.data[i];
        return make(std::move(out), [a, b](Tape& t, Node& n) {
            Array ga = n.grad, gb = n.grad;
            const Array& va = t.value(a);
            const Array& vb2 = t.value(b);
            for (std::size_t i = 0; i < ga.numel(); ++i) {
                ga.data[i] *= vb2.data[i];
                gb.data[i] *= va.data[i];
            }
            t.accumulate(a, ga);
            t.accumulate(b, gb);
        });
    }

    Var scale(Var a, double c) {
        Array out = value(a);
        for (auto& x : out.data) x *= c;
        return make(std::move(out), [a, c](Tape& t, Node& n) {
            Array g = n.grad;
            for (auto& x : g.data) x *= c;
            t.accumulate(a, g);
        });
    }

    Var add_scalar(Var a, double c) {
        Array out = value(a);
        for (auto& x : out.data) x += c;
        return make(std::move(out), [a](Tape& t, Node& n) { t.accumulate(a, n.grad); });
    }

    Var exp_(Var a) {
        Array out = value(a);
        for (auto& x : out.data) x = std::exp(x);
        return make(std::move(out), [a](Tape& t, Node& n) {
            Array g = n.grad;
            for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] *= n.value.data[i];
            t.accumulate(a, g);
        });
    }

    Var tanh_(Var a) {
        Array out = value(a);
        for (auto& x : out.data) x = std::tanh(x);
        return make(std::move(out), [a](Tape& t, Node& n) {
            Array g = n.grad;
            for (std::size_t i = 0; i < g.numel(); ++i)
                g.data[i] *= 1.0 - n.value.data[i] * n.value.data[i];
            t.accumulate(a, g);
        });
    }

    Var sigmoid(Var a) {
        Array out = value(a);
        for (auto& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
        return make(std::move(out), [a](Tape& t, Node& n) {
            Array g = n.grad;
            for (std::size_t i = 0; i < g.numel(); ++i) {
                double s = n.value.data[i];
                g.data[i] *= s * (1.0 - s);
            }
            t.accumulate(a, g);
        });
    }

    // Exact (erf) GELU.
    Var gelu(Var a) {
        Array out = value(a);
        for (auto& x : out.data) x = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
        return make(std::move(out), [a](Tape& t, Node& n) {
            const Array& va = t.value(a);
            Array g = n.grad;
            for (std::size_t i = 0; i < g.numel(); ++i) {
                double x = va.data[i];
                double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
                double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
                g.data[i] *= cdf + x * pdf;
            }
            t.accumulate(a, g);
        });
    }

    // ---- linear algebra ----

    Var matmul(Var a, Var b) {
        const Array& va = value(a);
        const Array& vb = value(b);
        if (va.ndim() != 2 || vb.ndim() != 2 || va.cols() != vb.rows())
            throw std::invalid_argument("matmul: incompatible shapes " + va.shape_str() +
                                        " x " + vb.shape_str());
        std::size_t M = va.rows(), K = va.cols(), N = vb.cols();
        Array out({M, N});
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t k = 0; k < K; ++k) {
                double aik = va.data[i * K + k];
                if (aik == 0.0) continue;
                const double* brow = &vb.data[k * N];
                double* orow = &out.data[i * N];
                for (std::size_t j = 0; j < N; ++j) orow[j] += aik * brow[j];
            }
        return make(std::move(out), [a, b, M, K, N](Tape& t, Node& n) {
            const Array& va2 = t.value(a);
            const Array& vb2 = t.value(b);
            // dA = dC * B^T
            Array ga({M, K});
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t j = 0; j < N; ++j) {
                    double g = n.grad.data[i * N + j];
                    if (g == 0.0) continue;
                    for (std::size_t k = 0; k < K; ++k)
                        ga.data[i * K + k] += g * vb2.data[k * N + j];
                }
            t.accumulate(a, ga);
            // dB = A^T * dC
            Array gb({K, N});
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    double av = va2.data[i * K + k];
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < N; ++j)
                        gb.data[k * N + j] += av * n.grad.data[i * N + j];
                }
            t.accumulate(b, gb);
        });
    }

    // a [M x K] times b^T where b is [N x K]; avoids materializing transposes
    // in attention score computation.
    Var matmul_bt(Var a, Var b) {
        const Array& va = value(a);
        const Array& vb = value(b);
        if (va.ndim() != 2 || vb.ndim() != 2 || va.cols() != vb.cols())
            throw std::invalid_argument("matmul_bt: incompatible shapes " + va.shape_str() +
                                        " x " + vb.shape_str() + "^T");
        std::size_t M = va.rows(), K = va.cols(), N = vb.rows();
        Array out({M, N});
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < K; ++k) s += va.data[i * K + k] * vb.data[j * K + k];
                out.data[i * N + j] = s;
            }
        return make(std::move(out), [a, b, M, K, N](Tape& t, Node& n) {
            const Array& va2 = t.value(a);
            const Array& vb2 = t.value(b);
            Array ga({M, K}), gb({N, K});
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t j = 0; j < N; ++j) {
                    double g = n.grad.data[i * N + j];
                    if (g == 0.0) continue;
                    for (std::size_t k = 0; k < K; ++k) {
                        ga.data[i * K + k] += g * vb2.data[j * K + k];
                        gb.data[j * K + k] += g * va2.data[i * K + k];
                    }
                }
            t.accumulate(a, ga);
            t.accumulate(b, gb);
        });
    }

    // mat [R x C] + row [C] broadcast over rows
    Var add_row(Var mat, Var row) {
        const Array& vm = value(mat);
        const Array& vr = value(row);
        if (vr.numel() != vm.cols())
            throw std::invalid_argument("add_row: row length " + vr.shape_str() +
                                        " does not match " + vm.shape_str());
        Array out = vm;
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += vr.data[c];
        return make(std::move(out), [mat, row](Tape& t, Node& n) {
            t.accumulate(mat, n.grad);
            Array gr({n.value.cols()});
            for (std::size_t r = 0; r < n.value.rows(); ++r)
                for (std::size_t c = 0; c < n.value.cols(); ++c)
                    gr.data[c] += n.grad.at(r, c);
            t.accumulate(row, gr);
        });
    }

    // Gather rows of `table` by index; backward scatter-adds. Used for
    // embedding lookup and for selecting masked positions.
    Var gather_rows(Var table, std::vector<std::size_t> idx, const std::string& name = "table") {
        const Array& vt = value(table);
        std::size_t C = vt.cols();
        for (auto i : idx)
            if (i >= vt.rows())
                throw std::out_of_range("gather_rows: index " + std::to_string(i) +
                                        " out of range for " + name + " " + vt.shape_str());
        Array out({idx.size(), C});
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < C; ++c) out.at(r, c) = vt.at(idx[r], c);
        return make(std::move(out), [table, idx = std::move(idx), C](Tape& t, Node& n) {
            Array& g = t.grad(table);
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t c = 0; c < C; ++c) g.at(idx[r], c) += n.grad.at(r, c);
        });
    }

    Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
        const Array& va = value(a);
        std::size_t R = va.rows(), C = va.cols();
        if (c1 > C || c0 > c1) throw std::invalid_argument("slice_cols: bad range");
        Array out({R, c1 - c0});
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = va.at(r, c);
        return make(std::move(out), [a, c0, c1, R](Tape& t, Node& n) {
            Array& g = t.grad(a);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = c0; c < c1; ++c) g.at(r, c) += n.grad.at(r, c - c0);
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        std::size_t R = value(parts[0]).rows(), C = 0;
        for (auto p : parts) C += value(p).cols();
        Array out({R, C});
        std::size_t off = 0;
        for (auto p : parts) {
            const Array& vp = value(p);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < vp.cols(); ++c) out.at(r, off + c) = vp.at(r, c);
            off += vp.cols();
        }
        return make(std::move(out), [parts, R](Tape& t, Node& n) {
            std::size_t off2 = 0;
            for (auto p : parts) {
                std::size_t pc = t.value(p).cols();
                Array g({R, pc});
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < pc; ++c) g.at(r, c) = n.grad.at(r, off2 + c);
                t.accumulate(p, g);
                off2 += pc;
            }
        });
    }

    Var sum_all(Var a) {
        double s = 0.0;
        for (double x : value(a).data) s += x;
        Array out({1});
        out.data[0] = s;
        return make(std::move(out), [a](Tape& t, Node& n) {
            Array g = Array::zeros_like(t.value(a));
            for (auto& x : g.data) x = n.grad.data[0];
            t.accumulate(a, g);
        });
    }

    // ---- normalization, attention, losses ----

    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-12) {
        const Array& vx = value(x);
        const Array& vg = value(gain);
        const Array& vb = value(bias);
        std::size_t R = vx.rows(), C = vx.cols();
        if (vg.numel() != C || vb.numel() != C)
            throw std::invalid_argument("layer_norm: gain/bias must match last dim " +
                                        std::to_string(C));
        Array out({R, C});
        auto mu = std::make_shared<std::vector<double>>(R);
        auto istd = std::make_shared<std::vector<double>>(R);
        for (std::size_t r = 0; r < R; ++r) {
            double m = 0.0;
            for (std::size_t c = 0; c < C; ++c) m += vx.at(r, c);
            m /= C;
            double v = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                double d = vx.at(r, c) - m;
                v += d * d;
            }
            v /= C;
            double is = 1.0 / std::sqrt(v + eps);
            (*mu)[r] = m;
            (*istd)[r] = is;
            for (std::size_t c = 0; c < C; ++c)
                out.at(r, c) = (vx.at(r, c) - m) * is * vg.data[c] + vb.data[c];
        }
        return make(std::move(out), [x, gain, bias, mu, istd, R, C](Tape& t, Node& n) {
            const Array& vx2 = t.value(x);
            const Array& vg2 = t.value(gain);
            Array gx({R, C}), gg({C}), gb({C});
            for (std::size_t r = 0; r < R; ++r) {
                double is = (*istd)[r], m = (*mu)[r];
                // xhat = (x - mu) * istd; dy/dx via standard layernorm backward
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                std::vector<double> xhat(C), dy(C);
                for (std::size_t c = 0; c < C; ++c) {
                    xhat[c] = (vx2.at(r, c) - m) * is;
                    dy[c] = n.grad.at(r, c) * vg2.data[c];
                    sum_dy += dy[c];
                    sum_dy_xhat += dy[c] * xhat[c];
                    gg.data[c] += n.grad.at(r, c) * xhat[c];
                    gb.data[c] += n.grad.at(r, c);
                }
                for (std::size_t c = 0; c < C; ++c)
                    gx.at(r, c) = is * (dy[c] - sum_dy / C - xhat[c] * sum_dy_xhat / C);
            }
            t.accumulate(x, gx);
            t.accumulate(gain, gg);
            t.accumulate(bias, gb);
        });
    }

    // Row softmax over the first `valid` columns; remaining columns get 0.
    // valid == 0 means all columns are valid.
    Var softmax_rows(Var a, std::size_t valid = 0) {
        const Array& va = value(a);
        std::size_t R = va.rows(), C = va.cols();
        std::size_t V = valid == 0 ? C : valid;
        Array out({R, C});
        for (std::size_t r = 0; r < R; ++r) {
            double mx = -1e300;
            for (std::size_t c = 0; c < V; ++c) mx = std::max(mx, va.at(r, c));
            double z = 0.0;
            for (std::size_t c = 0; c < V; ++c) z += std::exp(va.at(r, c) - mx);
            for (std::size_t c = 0; c < V; ++c) out.at(r, c) = std::exp(va.at(r, c) - mx) / z;
        }
        return make(std::move(out), [a, R, C, V](Tape& t, Node& n) {
            Array g({R, C});
            for (std::size_t r = 0; r < R; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < V; ++c) dot += n.grad.at(r, c) * n.value.at(r, c);
                for (std::size_t c = 0; c < V; ++c)
                    g.at(r, c) = n.value.at(r, c) * (n.grad.at(r, c) - dot);
            }
            t.accumulate(a, g);
        });
    }

    // Mean NLL over rows whose target != ignore_index. All rows ignored -> 0.
    Var softmax_cross_entropy(Var logits, const std::vector<int>& targets, int ignore_index = -1) {
        Var s = softmax_ce_sum(logits, targets, ignore_index);
        std::size_t n = 0;
        for (int tgt : targets)
            if (tgt != ignore_index) ++n;
        return n == 0 ? s : scale(s, 1.0 / static_cast<double>(n));
    }

    // Summed NLL over non-ignored rows (callers divide by their own count).
    Var softmax_ce_sum(Var logits, std::vector<int> targets, int ignore_index = -1) {
        const Array& vl = value(logits);
        std::size_t R = vl.rows(), C = vl.cols();
        if (targets.size() != R)
            throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                        " targets for " + std::to_string(R) + " rows");
        for (int tgt : targets)
            if (tgt != ignore_index && (tgt < 0 || static_cast<std::size_t>(tgt) >= C))
                throw std::out_of_range("cross_entropy: target " + std::to_string(tgt) +
                                        " outside [0," + std::to_string(C) + ")");
        auto probs = std::make_shared<Array>(Array({R, C}));
        double loss = 0.0;
        for (std::size_t r = 0; r < R; ++r) {
            double mx = -1e300;
            for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, vl.at(r, c));
            double z = 0.0;
            for (std::size_t c = 0; c < C; ++c) z += std::exp(vl.at(r, c) - mx);
            double lz = std::log(z) + mx;
            for (std::size_t c = 0; c < C; ++c) probs->at(r, c) = std::exp(vl.at(r, c) - lz);
            if (targets[r] != ignore_index) loss += lz - vl.at(r, targets[r]);
        }
        Array out({1});
        out.data[0] = loss;
        return make(std::move(out),
                    [logits, targets = std::move(targets), ignore_index, probs, R, C](Tape& t, Node& n) {
                        double g0 = n.grad.data[0];
                        Array g({R, C});
                        for (std::size_t r = 0; r < R; ++r) {
                            if (targets[r] == ignore_index) continue;
                            for (std::size_t c = 0; c < C; ++c) g.at(r, c) = g0 * probs->at(r, c);
                            g.at(r, targets[r]) -= g0;
                        }
                        t.accumulate(logits, g);
                    });
    }

    // Mean smooth-L1 between pred and constant targets. Empty -> 0.
    Var smooth_l1(Var pred, std::vector<double> target, double beta = 1.0) {
        if (beta <= 0.0) throw std::invalid_argument("smooth_l1: beta must be > 0");
        const Array& vp = value(pred);
        std::size_t N = vp.numel();
        if (target.size() != N)
            throw std::invalid_argument("smooth_l1: size mismatch");
        Array out({1});
        double loss = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double d = vp.data[i] - target[i];
            loss += std::fabs(d) < beta ? 0.5 * d * d / beta : std::fabs(d) - 0.5 * beta;
        }
        if (N > 0) loss /= static_cast<double>(N);
        out.data[0] = loss;
        return make(std::move(out),
                    [pred, target = std::move(target), beta, N](Tape& t, Node& n) {
                        if (N == 0) return;
                        double g0 = n.grad.data[0] / static_cast<double>(N);
                        const Array& vp2 = t.value(pred);
                        Array g = Array::zeros_like(vp2);
                        for (std::size_t i = 0; i < N; ++i) {
                            double d = vp2.data[i] - target[i];
                            g.data[i] = g0 * (std::fabs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0));
                        }
                        t.accumulate(pred, g);
                    });
    }

    // ---- backward ----

    void backward(Var loss) {
        if (value(loss).numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " +
                                        value(loss).shape_str());
        ensure_grad(loss.id).data[0] = 1.0;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.backward && !n.grad.data.empty()) n.backward(*this, n);
        }
    }

    std::size_t size() const { return nodes_.size(); }

  private:
    Var make(Array v, std::function<void(Tape&, Node&)> bw) {
        nodes_.push_back(Node{std::move(v), Array{}, std::move(bw)});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Array& ensure_grad(int id) {
        Node& n = nodes_[id];
        if (n.grad.data.empty()) n.grad = Array::zeros_like(n.value);
        return n.grad;
    }

    void accumulate(Var v, const Array& g) {
        Array& dst = ensure_grad(v.id);
        for (std::size_t i = 0; i < dst.numel(); ++i) dst.data[i] += g.data[i];
    }

    void check_same_shape(const char* op, Var a, Var b) const {
        if (!value(a).same_shape(value(b)))
            throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                        value(a).shape_str() + " vs " + value(b).shape_str());
    }

    std::vector<Node> nodes_;
};

}  // namespace posmask
