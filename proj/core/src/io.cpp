#include "alqueue/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace alqueue {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_dataset_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  const int k = d.empty() ? 0 : static_cast<int>(d[0].candidate.latent.size());
  out << "id,origin";
  for (int j = 0; j < k; ++j) out << ",latent_" << j;
  out << ",s_sa,s_t,s_is\n";
  for (const auto& r : d) {
    out << r.candidate.id << ',' << origin_name(r.candidate.origin);
    for (double v : r.candidate.latent) out << ',' << format_double(v);
    out << ',' << format_double(r.s_sa) << ',' << format_double(r.s_t) << ',';
    if (r.s_is) out << format_double(*r.s_is);
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path, const FeatureMaps& maps) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset file empty: " + path);
  const auto header = split_line(line, ',');
  if (header.size() < 5 || header[0] != "id" || header[1] != "origin") {
    throw std::runtime_error("dataset file: unexpected header in " + path);
  }
  const int k = static_cast<int>(header.size()) - 5;
  if (k != maps.latent_dim()) {
    throw std::runtime_error("dataset file: latent dimension mismatch in " + path);
  }
  Dataset d;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split_line(line, ',');
    if (cols.size() != header.size()) {
      throw std::runtime_error("dataset file: bad column count at line " +
                               std::to_string(lineno) + " in " + path);
    }
    ScoredRecord r;
    r.candidate.id = std::stoll(cols[0]);
    r.candidate.origin = origin_from_name(cols[1]);
    r.candidate.latent.resize(k);
    for (int j = 0; j < k; ++j) r.candidate.latent[j] = std::stod(cols[2 + j]);
    maps.refeaturize(r.candidate);
    r.s_sa = std::stod(cols[2 + k]);
    r.s_t = std::stod(cols[3 + k]);
    if (!cols[4 + k].empty()) r.s_is = std::stod(cols[4 + k]);
    if (!d.insert_unique(std::move(r))) {
      throw std::runtime_error("dataset file: duplicate dedup key at line " +
                               std::to_string(lineno) + " in " + path);
    }
  }
  return d;
}

KeyValueFile KeyValueFile::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read file: " + path);
  KeyValueFile kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos) {
      throw std::runtime_error("bad key/value line in " + path + ": " + line);
    }
    kv.set(line.substr(0, sp), line.substr(sp + 1));
  }
  return kv;
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  if (values_.count(key) == 0) order_.push_back(key);
  values_[key] = value;
}

void KeyValueFile::set_double(const std::string& key, double value) {
  set(key, format_double(value));
}

void KeyValueFile::set_int(const std::string& key, std::int64_t value) {
  set(key, std::to_string(value));
}

void KeyValueFile::set_uint(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}

const std::string& KeyValueFile::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("missing key: " + key);
  return it->second;
}

double KeyValueFile::get_double(const std::string& key) const {
  return std::stod(get(key));
}

std::int64_t KeyValueFile::get_int(const std::string& key) const {
  return std::stoll(get(key));
}

std::uint64_t KeyValueFile::get_uint(const std::string& key) const {
  return std::stoull(get(key));
}

void KeyValueFile::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const auto& key : order_) out << key << ' ' << values_.at(key) << '\n';
}

std::string join_doubles(const std::vector<double>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += format_double(v[i]);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& s, char sep) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

}  // namespace alqueue
