#include <bit>
#include <cstring>
#include <fstream>

#include "toothseg/data.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swaps");

namespace toothseg {

namespace {

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IngestError("cannot open for writing: " + path);
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void f32_row_major(const Mat& m) {
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) f32(static_cast<float>(m(i, j)));
  }
  void close() {
    out_.flush();
    if (!out_) throw IngestError("write failed: " + path_);
    out_.close();
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw IngestError("cannot open for reading: " + path);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), n);
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw ParseError("truncated file", offset_ + in_.gcount());
    offset_ += n;
  }
  std::uint16_t u16() {
    std::uint16_t v;
    bytes(&v, 2);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
  Mat f32_row_major(int rows, int cols) {
    Mat m(rows, cols);
    std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
    bytes(buf.data(), buf.size() * 4);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = buf[static_cast<std::size_t>(i) * cols + j];
    return m;
  }
  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof()) throw ParseError("trailing bytes", offset_);
  }
  std::size_t offset() const { return offset_; }

 private:
  std::ifstream in_;
  std::size_t offset_ = 0;
};

constexpr char kPredictionMagic[4] = {'B', 'A', 'T', 'P'};
constexpr char kScanMagic[4] = {'B', 'A', 'T', 'S'};
constexpr char kCheckpointMagic[4] = {'T', 'S', 'C', 'K'};
constexpr std::uint16_t kFormatVersion = 1;

}  // namespace

void write_prediction(const Mat& probs, const std::vector<InstancePrediction>& instances,
                      const std::string& path) {
  if (probs.cols() != 17)
    throw PreconditionError("write_prediction: probability matrix must have 17 columns");
  const int n = static_cast<int>(probs.rows());
  Writer w(path);
  w.bytes(kPredictionMagic, 4);
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(n));
  w.f32_row_major(probs);
  w.u32(static_cast<std::uint32_t>(instances.size()));
  for (const auto& inst : instances) {
    if (inst.class_dist.size() != 17 || inst.mask_prob.size() != n)
      throw PreconditionError("write_prediction: instance shape mismatch");
    for (int c = 0; c < 17; ++c) w.f32(static_cast<float>(inst.class_dist(c)));
    w.f32(static_cast<float>(inst.score));
    for (int i = 0; i < n; ++i) w.f32(static_cast<float>(inst.mask_prob(i)));
  }
  w.close();
}

PredictionFile read_prediction(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kPredictionMagic, 4) != 0)
    throw ParseError("bad prediction magic", 0);
  const std::uint16_t version = r.u16();
  if (version != kFormatVersion) throw ParseError("unsupported prediction version", 4);
  const int n = static_cast<int>(r.u32());

  PredictionFile pf;
  pf.probs = r.f32_row_major(n, 17);
  const int count = static_cast<int>(r.u32());
  pf.instances.resize(count);
  for (int k = 0; k < count; ++k) {
    auto& inst = pf.instances[k];
    inst.class_dist.resize(17);
    for (int c = 0; c < 17; ++c) inst.class_dist(c) = r.f32();
    inst.score = r.f32();
    inst.mask_prob.resize(n);
    for (int i = 0; i < n; ++i) inst.mask_prob(i) = r.f32();
  }
  r.expect_eof();
  return pf;
}

void write_scan(const Scan& scan, const std::string& path) {
  const int n = scan.size();
  Writer w(path);
  w.bytes(kScanMagic, 4);
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(n));
  w.f32_row_major(scan.points.coords);
  w.f32_row_major(scan.points.normals);
  w.f32_row_major(scan.face_vertex_coords);
  w.f32_row_major(scan.face_vertex_normals);
  for (int i = 0; i < n; ++i) w.u16(static_cast<std::uint16_t>(scan.instance_ids[i]));
  for (int i = 0; i < n; ++i) w.u16(static_cast<std::uint16_t>(scan.categories[i]));
  w.close();
}

Scan read_scan(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kScanMagic, 4) != 0) throw ParseError("bad scan magic", 0);
  if (r.u16() != kFormatVersion) throw ParseError("unsupported scan version", 4);
  const int n = static_cast<int>(r.u32());
  Scan scan;
  scan.points.coords = r.f32_row_major(n, 3);
  scan.points.normals = r.f32_row_major(n, 3);
  scan.face_vertex_coords = r.f32_row_major(n, 9);
  scan.face_vertex_normals = r.f32_row_major(n, 9);
  scan.instance_ids.resize(n);
  for (int i = 0; i < n; ++i) scan.instance_ids[i] = r.u16();
  scan.categories.resize(n);
  for (int i = 0; i < n; ++i) scan.categories[i] = r.u16();
  r.expect_eof();
  return scan;
}

void write_checkpoint(const ArrayMap& arrays, const std::string& path) {
  Writer w(path);
  w.bytes(kCheckpointMagic, 4);
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, mat] : arrays) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(mat.rows()));
    w.u32(static_cast<std::uint32_t>(mat.cols()));
    w.f32_row_major(mat);
  }
  w.close();
}

ArrayMap read_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ParseError("bad checkpoint magic", 0);
  if (r.u16() != kFormatVersion) throw ParseError("unsupported checkpoint version", 4);
  const int count = static_cast<int>(r.u32());
  ArrayMap arrays;
  for (int k = 0; k < count; ++k) {
    const int name_len = r.u16();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    const int rows = static_cast<int>(r.u32());
    const int cols = static_cast<int>(r.u32());
    arrays[name] = r.f32_row_major(rows, cols);
  }
  r.expect_eof();
  return arrays;
}

void write_labeled_ply(const std::string& path, const Mat& coords,
                       const std::vector<int>& labels) {
  static const unsigned char palette[17][3] = {
      {190, 190, 190}, {230, 25, 75},  {60, 180, 75},   {255, 225, 25},
      {0, 130, 200},   {245, 130, 48}, {145, 30, 180},  {70, 240, 240},
      {240, 50, 230},  {210, 245, 60}, {250, 190, 212}, {0, 128, 128},
      {220, 190, 255}, {170, 110, 40}, {255, 250, 200}, {128, 0, 0},
      {170, 255, 195}};
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write PLY: " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << coords.rows()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\n"
         "end_header\n";
  for (int i = 0; i < coords.rows(); ++i) {
    const auto& c = palette[labels[i] % 17];
    out << static_cast<float>(coords(i, 0)) << ' ' << static_cast<float>(coords(i, 1))
        << ' ' << static_cast<float>(coords(i, 2)) << ' ' << int(c[0]) << ' '
        << int(c[1]) << ' ' << int(c[2]) << '\n';
  }
}

}  // namespace toothseg
