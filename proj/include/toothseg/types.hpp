#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace toothseg {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using IMat = Eigen::MatrixXi;

// Point cloud with unit normals, coordinates in millimeters.
struct PointSet {
  Mat coords;   // N x 3
  Mat normals;  // N x 3, each row unit length within 1e-4

  int size() const { return static_cast<int>(coords.rows()); }
  void validate() const;
};

// Row q lists the k nearest source indices to query q, ascending distance,
// ties broken by ascending index.
struct NeighborIndex {
  IMat indices;  // Q x k
};

struct BoundaryMask {
  std::vector<char> is_boundary;  // length N

  int count() const {
    int n = 0;
    for (char b : is_boundary) n += (b != 0);
    return n;
  }
};

struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parse failure in a binary file; carries the byte offset of the failure.
struct ParseError : std::runtime_error {
  std::size_t byte_offset;
  ParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
};

}  // namespace toothseg
