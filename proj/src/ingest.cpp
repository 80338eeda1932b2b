#include "txgnn/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace txgnn {

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_num(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) +
                    ": not a number: '" + s + "'");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

NodeId intern(Dataset& ds, const std::string& name) {
  auto it = ds.node_ids.find(name);
  if (it != ds.node_ids.end()) return it->second;
  NodeId id = static_cast<NodeId>(ds.node_names.size());
  ds.node_names.push_back(name);
  ds.node_ids.emplace(name, id);
  return id;
}

// "addr:amount|addr:amount" -> pairs
std::vector<std::pair<std::string, double>> parse_addr_list(
    const std::string& s, std::size_t line_no) {
  std::vector<std::pair<std::string, double>> out;
  for (const std::string& part : split_line(s, '|')) {
    std::size_t colon = part.rfind(':');
    if (colon == std::string::npos || colon == 0) {
      throw DataError("line " + std::to_string(line_no) +
                      ": expected addr:amount, got '" + part + "'");
    }
    out.emplace_back(part.substr(0, colon),
                     parse_num(part.substr(colon + 1), line_no));
  }
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  return f;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  return f;
}

std::mt19937_64 rng_for(std::uint64_t seed, std::string_view label,
                        std::uint64_t coord) {
  return std::mt19937_64(derive_seed(seed, label, {coord}));
}

}  // namespace

NodeId Dataset::require_node(const std::string& name) const {
  auto it = node_ids.find(name);
  if (it == node_ids.end()) throw DataError("unknown node id '" + name + "'");
  return it->second;
}

Dataset load_edges(const std::string& path, EdgeSchema schema) {
  std::ifstream f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw DataError(path + ": empty file, header expected");

  Dataset ds;
  std::vector<EdgeRecord> edges;
  std::size_t attr_dim = 0;

  if (schema == EdgeSchema::transfer) {
    if (line != "src,dst,timestamp,amount") {
      throw DataError(path + ": bad header '" + line + "'");
    }
    attr_dim = 2;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::vector<std::string> cols = split_line(line, ',');
      if (cols.size() != 4) {
        throw DataError("line " + std::to_string(line_no) + ": expected 4 columns, got " +
                        std::to_string(cols.size()));
      }
      EdgeRecord e;
      e.src = intern(ds, cols[0]);
      e.dst = intern(ds, cols[1]);
      e.timestamp = parse_num(cols[2], line_no);
      double amount = parse_num(cols[3], line_no);
      e.attrs = {amount, e.timestamp};
      edges.push_back(std::move(e));
    }
  } else {
    std::vector<std::string> hdr = split_line(line, ',');
    bool ok = hdr.size() >= 4 && hdr[0] == "tx_id" && hdr[1] == "senders" &&
              hdr[2] == "receivers" && hdr[3] == "timestamp";
    for (std::size_t i = 4; ok && i < hdr.size(); ++i) {
      ok = hdr[i] == "extra_" + std::to_string(i - 3);
    }
    if (!ok) throw DataError(path + ": bad header '" + line + "'");
    std::size_t n_extra = hdr.size() - 4;
    attr_dim = 3 + n_extra;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::vector<std::string> cols = split_line(line, ',');
      if (cols.size() != hdr.size()) {
        throw DataError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(hdr.size()) + " columns, got " +
                        std::to_string(cols.size()));
      }
      auto senders = parse_addr_list(cols[1], line_no);
      auto receivers = parse_addr_list(cols[2], line_no);
      double ts = parse_num(cols[3], line_no);
      std::vector<double> extras;
      for (std::size_t i = 4; i < cols.size(); ++i) {
        extras.push_back(parse_num(cols[i], line_no));
      }
      for (const auto& [s_name, s_amt] : senders) {
        for (const auto& [r_name, r_amt] : receivers) {
          EdgeRecord e;
          e.src = intern(ds, s_name);
          e.dst = intern(ds, r_name);
          e.timestamp = ts;
          e.attrs = {s_amt, r_amt, ts};
          e.attrs.insert(e.attrs.end(), extras.begin(), extras.end());
          edges.push_back(std::move(e));
        }
      }
    }
  }

  ds.graph = Multigraph::build(ds.node_names.size(), std::move(edges), attr_dim);
  return ds;
}

LabelSet load_labels(const std::string& path, const Dataset& ds) {
  std::ifstream f = open_in(path);
  std::string line;
  if (!std::getline(f, line) || line != "node,label") {
    throw DataError(path + ": bad header, expected 'node,label'");
  }
  LabelSet ls;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols = split_line(line, ',');
    if (cols.size() != 2) {
      throw DataError("line " + std::to_string(line_no) + ": expected 2 columns");
    }
    if (cols[1] != "0" && cols[1] != "1") {
      throw DataError("line " + std::to_string(line_no) + ": label must be 0 or 1, got '" +
                      cols[1] + "'");
    }
    NodeId v = ds.require_node(cols[0]);
    int y = cols[1] == "1" ? 1 : 0;
    auto [it, inserted] = ls.labels.emplace(v, y);
    if (!inserted && it->second != y) {
      throw DataError("line " + std::to_string(line_no) + ": node '" + cols[0] +
                      "' labeled both 0 and 1");
    }
  }
  return ls;
}

void write_edges(const std::string& path, const Multigraph& g,
                 const std::vector<std::string>& names) {
  if (g.attr_dim() != 2) {
    throw ArgumentError("transfer schema stores exactly [amount, timestamp]; graph has attr_dim " +
                        std::to_string(g.attr_dim()));
  }
  std::ofstream f = open_out(path);
  f << "src,dst,timestamp,amount\n";
  for (const EdgeRecord& e : g.edges()) {
    f << names[e.src] << ',' << names[e.dst] << ',' << fmt(e.timestamp) << ','
      << fmt(e.attrs[0]) << '\n';
  }
}

void write_labels(const std::string& path, const LabelSet& labels,
                  const std::vector<std::string>& names) {
  std::ofstream f = open_out(path);
  f << "node,label\n";
  std::vector<NodeId> ids;
  ids.reserve(labels.labels.size());
  for (const auto& [v, y] : labels.labels) ids.push_back(v);
  std::sort(ids.begin(), ids.end());
  for (NodeId v : ids) f << names[v] << ',' << labels.labels.at(v) << '\n';
}

SplitAssignment split(const LabelSet& labels, std::uint64_t seed) {
  SplitAssignment a;
  a.seed = seed;
  for (int cls : {0, 1}) {
    std::vector<NodeId> ids;
    for (const auto& [v, y] : labels.labels) {
      if (y == cls) ids.push_back(v);
    }
    if (ids.empty()) {
      throw DataError("split: no nodes of class " + std::to_string(cls));
    }
    std::sort(ids.begin(), ids.end());
    auto rng = rng_for(seed, "split", static_cast<std::uint64_t>(cls));
    std::shuffle(ids.begin(), ids.end(), rng);
    std::size_t quarter = ids.size() / 4;
    a.val.insert(a.val.end(), ids.begin(), ids.begin() + quarter);
    a.test.insert(a.test.end(), ids.begin() + quarter, ids.begin() + 2 * quarter);
    a.train.insert(a.train.end(), ids.begin() + 2 * quarter, ids.end());
  }
  std::sort(a.train.begin(), a.train.end());
  std::sort(a.val.begin(), a.val.end());
  std::sort(a.test.begin(), a.test.end());
  return a;
}

SplitAssignment subsample_illicit(const SplitAssignment& a,
                                  const LabelSet& labels, double ratio,
                                  std::uint64_t seed) {
  if (!(ratio > 0.0) || ratio >= 1.0) {
    throw ArgumentError("illicit ratio must be in (0,1)");
  }
  std::vector<NodeId> illicit, normal;
  for (NodeId v : a.train) {
    (labels.labels.at(v) == 1 ? illicit : normal).push_back(v);
  }
  double n = static_cast<double>(normal.size());
  auto keep = static_cast<std::size_t>(std::llround(ratio * n / (1.0 - ratio)));
  if (keep < 1) keep = 1;
  if (keep > illicit.size()) {
    throw ArgumentError("illicit ratio " + std::to_string(ratio) +
                        " exceeds the training set's current fraction");
  }
  auto rng = rng_for(seed, "subsample", 0);
  std::shuffle(illicit.begin(), illicit.end(), rng);
  illicit.resize(keep);

  SplitAssignment out;
  out.seed = seed;
  out.val = a.val;
  out.test = a.test;
  out.train = normal;
  out.train.insert(out.train.end(), illicit.begin(), illicit.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

void write_split(const std::string& path, const SplitAssignment& a,
                 const std::vector<std::string>& names) {
  std::ofstream f = open_out(path);
  f << "node,split\n";
  for (NodeId v : a.train) f << names[v] << ",train\n";
  for (NodeId v : a.val) f << names[v] << ",val\n";
  for (NodeId v : a.test) f << names[v] << ",test\n";
}

SplitAssignment load_split(const std::string& path, const Dataset& ds) {
  std::ifstream f = open_in(path);
  std::string line;
  if (!std::getline(f, line) || line != "node,split") {
    throw DataError(path + ": bad header, expected 'node,split'");
  }
  SplitAssignment a;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols = split_line(line, ',');
    if (cols.size() != 2) {
      throw DataError("line " + std::to_string(line_no) + ": expected 2 columns");
    }
    NodeId v = ds.require_node(cols[0]);
    if (cols[1] == "train") a.train.push_back(v);
    else if (cols[1] == "val") a.val.push_back(v);
    else if (cols[1] == "test") a.test.push_back(v);
    else throw DataError("line " + std::to_string(line_no) + ": unknown split '" + cols[1] + "'");
  }
  std::sort(a.train.begin(), a.train.end());
  std::sort(a.val.begin(), a.val.end());
  std::sort(a.test.begin(), a.test.end());
  return a;
}

}  // namespace txgnn
