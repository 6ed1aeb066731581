#include "selfreg/nn.hpp"

#include <random>

namespace selfreg::nn {

MatrixXd random_matrix(int rows, int cols, Rng& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
  return m;
}

LstmWeights LstmWeights::init(int input, int hidden, Rng& rng, double scale) {
  LstmWeights w;
  w.W = random_matrix(4 * hidden, input + hidden, rng, scale);
  w.b = MatrixXd::Zero(4 * hidden, 1);
  w.b.block(hidden, 0, hidden, 1).setOnes();  // forget gate bias
  return w;
}

LstmWeights LstmWeights::zeros(int input, int hidden) {
  return {MatrixXd::Zero(4 * hidden, input + hidden), MatrixXd::Zero(4 * hidden, 1)};
}

LstmStep lstm_forward(const LstmWeights& w, const VectorXd& x, const VectorXd& h_prev, const VectorXd& c_prev) {
  const Eigen::Index H = h_prev.size();
  LstmStep s;
  s.xh.resize(x.size() + H);
  s.xh << x, h_prev;
  s.c_prev = c_prev;
  VectorXd z = w.W * s.xh + w.b.col(0);
  s.i = z.segment(0, H).unaryExpr([](double v) { return sigmoid(v); });
  s.f = z.segment(H, H).unaryExpr([](double v) { return sigmoid(v); });
  s.g = z.segment(2 * H, H).array().tanh();
  s.o = z.segment(3 * H, H).unaryExpr([](double v) { return sigmoid(v); });
  s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
  s.tanh_c = s.c.array().tanh();
  s.h = s.o.cwiseProduct(s.tanh_c);
  return s;
}

VectorXd lstm_backward(const LstmWeights& w, LstmWeights& grad, const LstmStep& s, const VectorXd& dh,
                       const VectorXd& dc, VectorXd& dc_prev) {
  const Eigen::Index H = s.h.size();
  VectorXd dct = dc + dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
  VectorXd dz(4 * H);
  dz.segment(0, H) = dct.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
  dz.segment(H, H) = dct.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
  dz.segment(2 * H, H) = dct.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
  dz.segment(3 * H, H) =
      dh.cwiseProduct(s.tanh_c).cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));
  dc_prev = dct.cwiseProduct(s.f);
  grad.W.noalias() += dz * s.xh.transpose();
  grad.b.col(0) += dz;
  return w.W.transpose() * dz;
}

VectorXd softmax(const VectorXd& z) {
  VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

VectorXd log_softmax(const VectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

}  // namespace selfreg::nn
