#pragma once

#include <string>
#include <vector>

#include "stb/tensor.hpp"

namespace stb {

// Scalar scores over aligned forecast/reference tensors. Degenerate
// references (zero variance, or zero mean for the kge bias ratio) make the
// affected scores NaN and raise the matching flag instead of throwing.
struct MetricSuite {
  double mae = 0;
  double rmse = 0;
  double pcc = 0;
  double r2 = 0;
  double kge = 0;
  double mnse = 0;
  double pnse = 0;
  bool flat_reference = false;  // zero variance in y
  bool zero_mean_reference = false;  // kge bias term undefined
};

double mae(const Tensor& y, const Tensor& yhat);
double rmse(const Tensor& y, const Tensor& yhat);
double pcc(const Tensor& y, const Tensor& yhat);
double r2(const Tensor& y, const Tensor& yhat);
double kge(const Tensor& y, const Tensor& yhat);
double mnse(const Tensor& y, const Tensor& yhat);
// Fraction of nodes whose per-node NSE exceeds `threshold`. Inputs are
// [..., N, H]; every axis except the node axis pools into that node's cells.
double pnse(const Tensor& y, const Tensor& yhat, double threshold = 0.0);

MetricSuite metric_suite(const Tensor& y, const Tensor& yhat,
                         double pnse_threshold = 0.0);

// Same scores over the cells where keep[i] != 0 (sensor-gap masking). Nodes
// with no kept cells drop out of the pnse denominator.
MetricSuite metric_suite_masked(const Tensor& y, const Tensor& yhat,
                                const std::vector<uint8_t>& keep,
                                double pnse_threshold = 0.0);

// One suite per horizon step on [..., N, H] inputs.
std::vector<MetricSuite> per_horizon_suite(const Tensor& y, const Tensor& yhat,
                                           double pnse_threshold = 0.0);

// Header: horizon,mae,rmse,pcc,r2,kge,mnse,pnse. Horizons are 1-based.
void write_metrics_csv(const std::string& path,
                       const std::vector<MetricSuite>& rows);

}  // namespace stb
