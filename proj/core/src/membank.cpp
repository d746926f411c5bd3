#include "siml/membank.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "siml/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "bank files assume a little-endian host");

namespace siml::membank {

namespace {

using nlohmann::json;

void write_u64(std::ostream& out, std::uint64_t value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t value = 0;
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!in) {
    throw Error(Errc::checkpoint_mismatch, "bank file truncated in header length");
  }
  return value;
}

void write_header(std::ostream& out, const json& header) {
  const std::string text = header.dump();
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

json read_header(std::istream& in, const char* expect_format) {
  const std::uint64_t len = read_u64(in);
  if (len == 0 || len > (1u << 20)) {
    throw Error(Errc::checkpoint_mismatch, "bank file header length is implausible");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) {
    throw Error(Errc::checkpoint_mismatch, "bank file truncated in header");
  }
  json header = json::parse(text, nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    throw Error(Errc::checkpoint_mismatch, "bank file header is not valid JSON");
  }
  if (header.value("format", std::string()) != expect_format) {
    throw Error(Errc::checkpoint_mismatch, "bank file has unexpected format tag");
  }
  return header;
}

}  // namespace

MemoryBank::MemoryBank(std::size_t size, std::size_t dim, double momentum, bool renormalize)
    : size_(size), dim_(dim), momentum_(momentum), renormalize_(renormalize) {
  if (size == 0 || dim == 0) {
    throw Error(Errc::invalid_config, "bank needs a positive size and dimension");
  }
  if (!(momentum > 0.0) || !(momentum <= 1.0)) {
    throw Error(Errc::invalid_config, "bank momentum must be in (0, 1]");
  }
  rows_.assign(size_, numkit::Vec(dim_, 0.0));
  have_.assign(size_, 0);
}

bool MemoryBank::initialized(std::size_t index) const {
  if (index >= size_) {
    throw Error(Errc::index_out_of_range, "bank slot " + std::to_string(index));
  }
  return have_[index] != 0;
}

void MemoryBank::update(std::size_t index, const numkit::Vec& feature) {
  if (index >= size_) {
    throw Error(Errc::index_out_of_range, "bank slot " + std::to_string(index));
  }
  if (feature.size() != dim_) {
    throw Error(Errc::dim_mismatch, "feature dimension does not match bank");
  }
  numkit::Vec& row = rows_[index];
  if (!have_[index]) {
    row = feature;
    have_[index] = 1;
    ++initialized_count_;
    return;
  }
  for (std::size_t k = 0; k < dim_; ++k) {
    row[k] = momentum_ * feature[k] + (1.0 - momentum_) * row[k];
  }
  if (renormalize_) {
    numkit::l2_normalize_inplace(row);
  }
}

const numkit::Vec& MemoryBank::row(std::size_t index) const {
  if (index >= size_) {
    throw Error(Errc::index_out_of_range, "bank slot " + std::to_string(index));
  }
  if (!have_[index]) {
    throw Error(Errc::uninitialized_slot, "bank slot " + std::to_string(index) + " never written");
  }
  return rows_[index];
}

numkit::Mat MemoryBank::snapshot() const {
  numkit::Mat out(size_, dim_);
  for (std::size_t i = 0; i < size_; ++i) {
    const numkit::Vec& r = row(i);  // throws on gaps
    std::copy(r.begin(), r.end(), out.row(i));
  }
  return out;
}

void MemoryBank::save(std::ostream& out) const {
  json header = {
      {"format", "siml.bank"},
      {"version", 1},
      {"size", size_},
      {"dim", dim_},
      {"momentum", momentum_},
      {"renormalize", renormalize_},
  };
  write_header(out, header);
  out.write(reinterpret_cast<const char*>(have_.data()),
            static_cast<std::streamsize>(have_.size()));
  for (const numkit::Vec& row : rows_) {
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) {
    throw Error(Errc::io_failure, "failed to write bank data");
  }
}

MemoryBank MemoryBank::load(std::istream& in) {
  const json header = read_header(in, "siml.bank");
  const auto size = header.value("size", std::size_t{0});
  const auto dim = header.value("dim", std::size_t{0});
  const double momentum = header.value("momentum", 0.0);
  if (size == 0 || size > (1u << 24) || dim == 0 || dim > (1u << 16)) {
    throw Error(Errc::checkpoint_mismatch, "bank file declares implausible shape");
  }
  if (!(momentum > 0.0) || !(momentum <= 1.0)) {
    throw Error(Errc::checkpoint_mismatch, "bank file declares invalid momentum");
  }
  if (!header.contains("renormalize") || !header["renormalize"].is_boolean()) {
    throw Error(Errc::checkpoint_mismatch, "bank file is missing the renormalize flag");
  }
  MemoryBank bank(size, dim, momentum, header["renormalize"].get<bool>());
  in.read(reinterpret_cast<char*>(bank.have_.data()),
          static_cast<std::streamsize>(bank.have_.size()));
  if (!in) {
    throw Error(Errc::checkpoint_mismatch, "bank file truncated in slot flags");
  }
  bank.initialized_count_ = 0;
  for (unsigned char flag : bank.have_) {
    if (flag > 1) {
      throw Error(Errc::checkpoint_mismatch, "bank file has corrupt slot flags");
    }
    bank.initialized_count_ += flag;
  }
  for (numkit::Vec& row : bank.rows_) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (!in) {
      throw Error(Errc::checkpoint_mismatch, "bank file truncated in rows");
    }
  }
  return bank;
}

bool operator==(const MemoryBank& a, const MemoryBank& b) {
  return a.size_ == b.size_ && a.dim_ == b.dim_ && a.momentum_ == b.momentum_ &&
         a.renormalize_ == b.renormalize_ && a.have_ == b.have_ && a.rows_ == b.rows_;
}

void save_banks(std::ostream& out, const MemoryBank& instance_bank,
                const MemoryBank& holistic_bank) {
  json header = {{"format", "siml.banks"}, {"version", 1}, {"count", 2}};
  write_header(out, header);
  instance_bank.save(out);
  holistic_bank.save(out);
}

BankPair load_banks(std::istream& in) {
  const json header = read_header(in, "siml.banks");
  if (header.value("count", 0) != 2) {
    throw Error(Errc::checkpoint_mismatch, "bank file does not hold exactly two banks");
  }
  BankPair pair;
  pair.instance_bank = MemoryBank::load(in);
  pair.holistic_bank = MemoryBank::load(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(Errc::checkpoint_mismatch, "bank file has trailing bytes");
  }
  return pair;
}

HolisticTrace holistic_feature(const numkit::Vec& original,
                               const std::vector<numkit::Vec>& scaled) {
  if (original.empty()) {
    throw Error(Errc::dim_mismatch, "original feature is empty");
  }
  HolisticTrace trace;
  trace.count = 1 + scaled.size();
  trace.mean = original;
  for (const numkit::Vec& f : scaled) {
    if (f.size() != original.size()) {
      throw Error(Errc::dim_mismatch, "scaled feature dimension mismatch");
    }
    for (std::size_t k = 0; k < f.size(); ++k) {
      trace.mean[k] += f[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(trace.count);
  for (double& v : trace.mean) {
    v *= inv;
  }
  trace.norm = numkit::norm(trace.mean);
  if (trace.norm < numkit::kNormEps) {
    throw Error(Errc::zero_vector, "scale features cancel to (near) zero");
  }
  trace.feature = trace.mean;
  for (double& v : trace.feature) {
    v /= trace.norm;
  }
  return trace;
}

numkit::Vec holistic_input_grad(const HolisticTrace& trace, const numkit::Vec& d_feature) {
  if (d_feature.size() != trace.feature.size()) {
    throw Error(Errc::dim_mismatch, "gradient dimension mismatch");
  }
  const double radial = numkit::dot(trace.feature, d_feature);
  numkit::Vec grad(d_feature.size());
  const double inv_count = 1.0 / static_cast<double>(trace.count);
  for (std::size_t k = 0; k < grad.size(); ++k) {
    grad[k] = (d_feature[k] - trace.feature[k] * radial) / trace.norm * inv_count;
  }
  return grad;
}

numkit::Mat fuse(const MemoryBank& instance_bank, const MemoryBank& holistic_bank) {
  if (instance_bank.size() != holistic_bank.size() ||
      instance_bank.dim() != holistic_bank.dim()) {
    throw Error(Errc::dim_mismatch, "banks disagree on shape");
  }
  if (!instance_bank.fully_initialized() || !holistic_bank.fully_initialized()) {
    throw Error(Errc::uninitialized_slot, "cannot fuse banks with unwritten slots");
  }
  numkit::Mat fused(instance_bank.size(), instance_bank.dim());
  numkit::Vec tmp(instance_bank.dim());
  for (std::size_t i = 0; i < instance_bank.size(); ++i) {
    const numkit::Vec& a = instance_bank.row(i);
    const numkit::Vec& b = holistic_bank.row(i);
    for (std::size_t k = 0; k < tmp.size(); ++k) {
      tmp[k] = 0.5 * (a[k] + b[k]);
    }
    numkit::l2_normalize_inplace(tmp);
    std::copy(tmp.begin(), tmp.end(), fused.row(i));
  }
  return fused;
}

numkit::Mat similarity(const numkit::Mat& fused) { return numkit::gram(fused); }

}  // namespace siml::membank
