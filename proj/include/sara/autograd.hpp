// autograd.hpp - a small reverse-mode tape over Matrix values.
//
// Nodes are created in topological order by the forward build; backward walks
// the recorded closures in reverse. Leaves flagged requires_grad accumulate
// into their grad matrices; everything else stays at zero, which is what the
// frozen-tensor contract relies on.

#ifndef SARA_AUTOGRAD_HPP
#define SARA_AUTOGRAD_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sara/matrix.hpp"

namespace sara {

class Tape {
public:
    int leaf(Matrix value, bool requires_grad = false) {
        return push(std::move(value), requires_grad, nullptr);
    }

    const Matrix& value(int id) const { return nodes_[check(id)].value; }
    const Matrix& grad(int id) const { return nodes_[check(id)].grad; }
    bool requires_grad(int id) const { return nodes_[check(id)].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // ------------------------------------------------------------------
    // operations
    // ------------------------------------------------------------------

    int matmul(int a, int b) {
        Matrix out = sara::matmul(value(a), value(b));
        return push(std::move(out), requires_grad(a) || requires_grad(b), [this, a, b](int o) {
            if (nodes_[a].requires_grad) {
                accumulate(nodes_[a].grad, sara::matmul(nodes_[o].grad, sara::transpose(nodes_[b].value)));
            }
            if (nodes_[b].requires_grad) {
                accumulate(nodes_[b].grad, sara::matmul(sara::transpose(nodes_[a].value), nodes_[o].grad));
            }
        });
    }

    int add(int a, int b) {
        Matrix out = sara::add(value(a), value(b));
        return push(std::move(out), requires_grad(a) || requires_grad(b), [this, a, b](int o) {
            if (nodes_[a].requires_grad) {
                accumulate(nodes_[a].grad, nodes_[o].grad);
            }
            if (nodes_[b].requires_grad) {
                accumulate(nodes_[b].grad, nodes_[o].grad);
            }
        });
    }

    int sub(int a, int b) {
        Matrix out = sara::sub(value(a), value(b));
        return push(std::move(out), requires_grad(a) || requires_grad(b), [this, a, b](int o) {
            if (nodes_[a].requires_grad) {
                accumulate(nodes_[a].grad, nodes_[o].grad);
            }
            if (nodes_[b].requires_grad) {
                accumulate(nodes_[b].grad, sara::scale(nodes_[o].grad, -1.0));
            }
        });
    }

    int mul(int a, int b) {
        Matrix out = hadamard(value(a), value(b));
        return push(std::move(out), requires_grad(a) || requires_grad(b), [this, a, b](int o) {
            if (nodes_[a].requires_grad) {
                accumulate(nodes_[a].grad, hadamard(nodes_[o].grad, nodes_[b].value));
            }
            if (nodes_[b].requires_grad) {
                accumulate(nodes_[b].grad, hadamard(nodes_[o].grad, nodes_[a].value));
            }
        });
    }

    int scale(int a, double c) {
        Matrix out = sara::scale(value(a), c);
        return push(std::move(out), requires_grad(a), [this, a, c](int o) {
            if (nodes_[a].requires_grad) {
                accumulate(nodes_[a].grad, sara::scale(nodes_[o].grad, c));
            }
        });
    }

    // C = A * diag(v); v is a 1 x cols node
    int scale_cols(int a, int v) {
        const Matrix& vv = value(v);
        if (vv.rows() != 1 || vv.cols() != value(a).cols()) {
            throw std::invalid_argument("tape scale_cols: diagonal must be 1x" +
                                        std::to_string(value(a).cols()) + ", got " +
                                        vv.shape_str());
        }
        Matrix out = sara::scale_cols(value(a), vv.data());
        return push(std::move(out), requires_grad(a) || requires_grad(v), [this, a, v](int o) {
            const Matrix& av = nodes_[a].value;
            const Matrix& vv2 = nodes_[v].value;
            const Matrix& go = nodes_[o].grad;
            if (nodes_[a].requires_grad) {
                accumulate(nodes_[a].grad, sara::scale_cols(go, vv2.data()));
            }
            if (nodes_[v].requires_grad) {
                Matrix& gv = nodes_[v].grad;
                for (std::size_t i = 0; i < av.rows(); ++i) {
                    for (std::size_t j = 0; j < av.cols(); ++j) {
                        gv(0, j) += go(i, j) * av(i, j);
                    }
                }
            }
        });
    }

    int transpose(int a) {
        Matrix out = sara::transpose(value(a));
        return push(std::move(out), requires_grad(a), [this, a](int o) {
            if (nodes_[a].requires_grad) {
                accumulate(nodes_[a].grad, sara::transpose(nodes_[o].grad));
            }
        });
    }

    int softmax_rows(int a) {
        Matrix out = sara::softmax_rows(value(a));
        return push(std::move(out), requires_grad(a), [this, a](int o) {
            if (!nodes_[a].requires_grad) {
                return;
            }
            const Matrix& s = nodes_[o].value;
            const Matrix& go = nodes_[o].grad;
            Matrix& ga = nodes_[a].grad;
            for (std::size_t i = 0; i < s.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < s.cols(); ++j) {
                    dot += go(i, j) * s(i, j);
                }
                for (std::size_t j = 0; j < s.cols(); ++j) {
                    ga(i, j) += s(i, j) * (go(i, j) - dot);
                }
            }
        });
    }

    int silu(int a) {
        const Matrix& av = value(a);
        Matrix out(av.rows(), av.cols());
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double x = av.data()[i];
            out.data()[i] = x / (1.0 + std::exp(-x));
        }
        return push(std::move(out), requires_grad(a), [this, a](int o) {
            if (!nodes_[a].requires_grad) {
                return;
            }
            const Matrix& av2 = nodes_[a].value;
            const Matrix& go = nodes_[o].grad;
            Matrix& ga = nodes_[a].grad;
            for (std::size_t i = 0; i < av2.size(); ++i) {
                const double x = av2.data()[i];
                const double sig = 1.0 / (1.0 + std::exp(-x));
                ga.data()[i] += go.data()[i] * sig * (1.0 + x * (1.0 - sig));
            }
        });
    }

    // y[i,:] = x[i,:] / rms(x[i,:]) * gain, gain a 1 x cols node
    int rms_norm(int x, int gain, double eps = 1e-8) {
        const Matrix& xv = value(x);
        const Matrix& gv = value(gain);
        if (gv.rows() != 1 || gv.cols() != xv.cols()) {
            throw std::invalid_argument("tape rms_norm: gain must be 1x" +
                                        std::to_string(xv.cols()) + ", got " + gv.shape_str());
        }
        const std::size_t n = xv.cols();
        Matrix out(xv.rows(), n);
        for (std::size_t i = 0; i < xv.rows(); ++i) {
            double ms = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                ms += xv(i, j) * xv(i, j);
            }
            const double r = std::sqrt(ms / static_cast<double>(n) + eps);
            for (std::size_t j = 0; j < n; ++j) {
                out(i, j) = xv(i, j) / r * gv(0, j);
            }
        }
        return push(std::move(out), requires_grad(x) || requires_grad(gain),
                    [this, x, gain, eps](int o) {
            const Matrix& xv2 = nodes_[x].value;
            const Matrix& gv2 = nodes_[gain].value;
            const Matrix& go = nodes_[o].grad;
            const std::size_t n = xv2.cols();
            for (std::size_t i = 0; i < xv2.rows(); ++i) {
                double ms = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    ms += xv2(i, j) * xv2(i, j);
                }
                const double r = std::sqrt(ms / static_cast<double>(n) + eps);
                if (nodes_[gain].requires_grad) {
                    for (std::size_t j = 0; j < n; ++j) {
                        nodes_[gain].grad(0, j) += go(i, j) * xv2(i, j) / r;
                    }
                }
                if (nodes_[x].requires_grad) {
                    double dot = 0.0; // sum_j go_j * g_j * x_j
                    for (std::size_t j = 0; j < n; ++j) {
                        dot += go(i, j) * gv2(0, j) * xv2(i, j);
                    }
                    const double r3n = r * r * r * static_cast<double>(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        nodes_[x].grad(i, j) +=
                            go(i, j) * gv2(0, j) / r - xv2(i, j) * dot / r3n;
                    }
                }
            }
        });
    }

    // out[i,:] = m[idx[i],:]
    int gather_rows(int m, std::vector<std::size_t> idx) {
        const Matrix& mv = value(m);
        Matrix out(idx.size(), mv.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] >= mv.rows()) {
                throw std::out_of_range("tape gather_rows: index " + std::to_string(idx[i]) +
                                        " out of range for " + mv.shape_str());
            }
            for (std::size_t j = 0; j < mv.cols(); ++j) {
                out(i, j) = mv(idx[i], j);
            }
        }
        return push(std::move(out), requires_grad(m), [this, m, idx = std::move(idx)](int o) {
            if (!nodes_[m].requires_grad) {
                return;
            }
            const Matrix& go = nodes_[o].grad;
            Matrix& gm = nodes_[m].grad;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                for (std::size_t j = 0; j < go.cols(); ++j) {
                    gm(idx[i], j) += go(i, j);
                }
            }
        });
    }

    int slice_cols(int a, std::size_t c0, std::size_t c1) {
        const Matrix& av = value(a);
        if (c0 >= c1 || c1 > av.cols()) {
            throw std::out_of_range("tape slice_cols: bad range [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") for " + av.shape_str());
        }
        Matrix out(av.rows(), c1 - c0);
        for (std::size_t i = 0; i < av.rows(); ++i) {
            for (std::size_t j = c0; j < c1; ++j) {
                out(i, j - c0) = av(i, j);
            }
        }
        return push(std::move(out), requires_grad(a), [this, a, c0](int o) {
            if (!nodes_[a].requires_grad) {
                return;
            }
            const Matrix& go = nodes_[o].grad;
            Matrix& ga = nodes_[a].grad;
            for (std::size_t i = 0; i < go.rows(); ++i) {
                for (std::size_t j = 0; j < go.cols(); ++j) {
                    ga(i, c0 + j) += go(i, j);
                }
            }
        });
    }

    int concat_cols(const std::vector<int>& parts) {
        if (parts.empty()) {
            throw std::invalid_argument("tape concat_cols: no parts");
        }
        std::size_t total = 0;
        bool rg = false;
        for (int p : parts) {
            total += value(p).cols();
            rg = rg || requires_grad(p);
        }
        const std::size_t rows = value(parts[0]).rows();
        Matrix out(rows, total);
        std::size_t off = 0;
        for (int p : parts) {
            const Matrix& pv = value(p);
            if (pv.rows() != rows) {
                throw std::invalid_argument("tape concat_cols: row mismatch");
            }
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < pv.cols(); ++j) {
                    out(i, off + j) = pv(i, j);
                }
            }
            off += pv.cols();
        }
        return push(std::move(out), rg, [this, parts](int o) {
            const Matrix& go = nodes_[o].grad;
            std::size_t off2 = 0;
            for (int p : parts) {
                Matrix& gp = nodes_[p].grad;
                if (nodes_[p].requires_grad) {
                    for (std::size_t i = 0; i < gp.rows(); ++i) {
                        for (std::size_t j = 0; j < gp.cols(); ++j) {
                            gp(i, j) += go(i, off2 + j);
                        }
                    }
                }
                off2 += nodes_[p].value.cols();
            }
        });
    }

    int concat_rows(const std::vector<int>& parts) {
        if (parts.empty()) {
            throw std::invalid_argument("tape concat_rows: no parts");
        }
        std::size_t total = 0;
        bool rg = false;
        for (int p : parts) {
            total += value(p).rows();
            rg = rg || requires_grad(p);
        }
        const std::size_t cols = value(parts[0]).cols();
        Matrix out(total, cols);
        std::size_t off = 0;
        for (int p : parts) {
            const Matrix& pv = value(p);
            if (pv.cols() != cols) {
                throw std::invalid_argument("tape concat_rows: col mismatch");
            }
            for (std::size_t i = 0; i < pv.rows(); ++i) {
                for (std::size_t j = 0; j < cols; ++j) {
                    out(off + i, j) = pv(i, j);
                }
            }
            off += pv.rows();
        }
        return push(std::move(out), rg, [this, parts](int o) {
            const Matrix& go = nodes_[o].grad;
            std::size_t off2 = 0;
            for (int p : parts) {
                Matrix& gp = nodes_[p].grad;
                if (nodes_[p].requires_grad) {
                    for (std::size_t i = 0; i < gp.rows(); ++i) {
                        for (std::size_t j = 0; j < gp.cols(); ++j) {
                            gp(i, j) += go(off2 + i, j);
                        }
                    }
                }
                off2 += nodes_[p].value.rows();
            }
        });
    }

    // scalar 0.5 * sum of squares
    int half_sum_squares(int a) {
        double acc = 0.0;
        for (double v : value(a).data()) {
            acc += v * v;
        }
        Matrix out(1, 1);
        out(0, 0) = 0.5 * acc;
        return push(std::move(out), requires_grad(a), [this, a](int o) {
            if (!nodes_[a].requires_grad) {
                return;
            }
            const double g = nodes_[o].grad(0, 0);
            Matrix& ga = nodes_[a].grad;
            const Matrix& av = nodes_[a].value;
            for (std::size_t i = 0; i < av.size(); ++i) {
                ga.data()[i] += g * av.data()[i];
            }
        });
    }

    // mean token-level cross entropy; targets[i] < 0 marks an ignored row
    int cross_entropy(int logits, const std::vector<int>& targets) {
        const Matrix& lv = value(logits);
        if (targets.size() != lv.rows()) {
            throw std::invalid_argument("tape cross_entropy: " + std::to_string(targets.size()) +
                                        " targets for " + std::to_string(lv.rows()) + " rows");
        }
        Matrix probs = sara::softmax_rows(lv);
        std::size_t count = 0;
        double total = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (targets[i] < 0) {
                continue;
            }
            if (static_cast<std::size_t>(targets[i]) >= lv.cols()) {
                throw std::out_of_range("tape cross_entropy: target " +
                                        std::to_string(targets[i]) + " >= vocab " +
                                        std::to_string(lv.cols()));
            }
            total += -std::log(std::max(probs(i, static_cast<std::size_t>(targets[i])), 1e-300));
            ++count;
        }
        if (count == 0) {
            throw std::invalid_argument("tape cross_entropy: no unmasked targets");
        }
        Matrix out(1, 1);
        out(0, 0) = total / static_cast<double>(count);
        return push(std::move(out), requires_grad(logits),
                    [this, logits, targets, probs = std::move(probs), count](int o) {
            if (!nodes_[logits].requires_grad) {
                return;
            }
            const double g = nodes_[o].grad(0, 0) / static_cast<double>(count);
            Matrix& gl = nodes_[logits].grad;
            for (std::size_t i = 0; i < targets.size(); ++i) {
                if (targets[i] < 0) {
                    continue;
                }
                for (std::size_t j = 0; j < gl.cols(); ++j) {
                    gl(i, j) += g * probs(i, j);
                }
                gl(i, static_cast<std::size_t>(targets[i])) -= g;
            }
        });
    }

    // ------------------------------------------------------------------
    // backward
    // ------------------------------------------------------------------

    void backward(int loss) {
        if (nodes_.empty()) {
            throw std::logic_error("tape backward: no forward pass recorded");
        }
        check(loss);
        if (backward_done_) {
            throw std::logic_error("tape backward: already run on this tape");
        }
        const Matrix& lv = nodes_[loss].value;
        if (lv.rows() != 1 || lv.cols() != 1) {
            throw std::invalid_argument("tape backward: loss must be 1x1, got " + lv.shape_str());
        }
        backward_done_ = true;
        nodes_[loss].grad(0, 0) = 1.0;
        for (int i = loss; i >= 0; --i) {
            if (nodes_[i].backward && nodes_[i].requires_grad) {
                nodes_[i].backward(i);
            }
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad;
        std::function<void(int)> backward; // null for leaves
    };

    static void accumulate(Matrix& dst, const Matrix& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst.data()[i] += src.data()[i];
        }
    }

    int push(Matrix value, bool requires_grad, std::function<void(int)> bw) {
        Node n;
        n.grad = Matrix(value.rows(), value.cols());
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int check(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
            throw std::out_of_range("tape: invalid node id " + std::to_string(id));
        }
        return id;
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

} // namespace sara

#endif // SARA_AUTOGRAD_HPP
