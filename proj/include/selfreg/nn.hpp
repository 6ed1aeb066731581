#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>

#include "selfreg/common.hpp"

namespace selfreg::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Callback used to enumerate the parameter blocks of a model: name and storage.
using BlockVisitor = std::function<void(const std::string&, MatrixXd&)>;
using ConstBlockVisitor = std::function<void(const std::string&, const MatrixXd&)>;

// LSTM cell: gates = W [x; h] + b, ordered (input, forget, cell, output).
struct LstmWeights {
  MatrixXd W;
  MatrixXd b;  // 4H x 1

  int hidden() const { return static_cast<int>(W.rows() / 4); }
  int input() const { return static_cast<int>(W.cols()) - hidden(); }

  static LstmWeights init(int input, int hidden, Rng& rng, double scale);
  static LstmWeights zeros(int input, int hidden);
};

struct LstmStep {
  VectorXd xh;  // [x; h_prev]
  VectorXd c_prev;
  VectorXd i, f, g, o;
  VectorXd c, h;
  VectorXd tanh_c;
};

LstmStep lstm_forward(const LstmWeights& w, const VectorXd& x, const VectorXd& h_prev, const VectorXd& c_prev);

// Backprop through one step. dh and dc are gradients w.r.t. the step outputs;
// returns d[x; h_prev] and writes dc_prev.
VectorXd lstm_backward(const LstmWeights& w, LstmWeights& grad, const LstmStep& s, const VectorXd& dh,
                       const VectorXd& dc, VectorXd& dc_prev);

VectorXd softmax(const VectorXd& z);
VectorXd log_softmax(const VectorXd& z);

MatrixXd random_matrix(int rows, int cols, Rng& rng, double scale);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace selfreg::nn
