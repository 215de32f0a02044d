#include "advrec/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "advrec/errors.hpp"

namespace advrec {

namespace {

constexpr const char* kMagic = "advrec-checkpoint";
constexpr int kVersion = 1;

template <typename T>
T read_field(std::istream& in, const std::string& key) {
  std::string k;
  T v{};
  if (!(in >> k) || k != key || !(in >> v)) {
    throw IncompatibleCheckpoint("expected field '" + key + "'");
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Encoder& enc, const HardnessModel& hardness) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char tau[64];
  std::snprintf(tau, sizeof tau, "%a", enc.tau());
  out << kMagic << ' ' << kVersion << '\n'
      << "backbone " << to_string(enc.kind()) << '\n'
      << "n_users " << enc.n_users() << '\n'
      << "n_items " << enc.n_items() << '\n'
      << "dim " << enc.dim() << '\n'
      << "layers " << enc.layers() << '\n'
      << "tau " << tau << '\n'
      << "hardness " << to_string(hardness.kind()) << '\n';
  write_table(out, "user", enc.user_table());
  write_table(out, "item", enc.item_table());
  write_table(out, "hardness_first", hardness.first());
  write_table(out, "hardness_second", hardness.second());
  if (!out) throw IoError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path, const InteractionSet& data) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) {
    throw IncompatibleCheckpoint(path + " is not a checkpoint");
  }
  if (version != kVersion) {
    throw IncompatibleCheckpoint("unsupported checkpoint version " + std::to_string(version));
  }
  Backbone kind;
  HardnessKind hkind;
  try {
    kind = parse_backbone(read_field<std::string>(in, "backbone"));
  } catch (const BadParam& e) {
    throw IncompatibleCheckpoint(e.what());
  }
  const auto n_users = read_field<std::size_t>(in, "n_users");
  const auto n_items = read_field<std::size_t>(in, "n_items");
  const auto dim = read_field<std::size_t>(in, "dim");
  const int layers = read_field<int>(in, "layers");
  const std::string tau_text = read_field<std::string>(in, "tau");
  char* end = nullptr;
  const double tau = std::strtod(tau_text.c_str(), &end);
  if (end == tau_text.c_str() || *end != '\0' || !(tau > 0.0)) {
    throw IncompatibleCheckpoint("bad tau '" + tau_text + "'");
  }
  try {
    hkind = parse_hardness_kind(read_field<std::string>(in, "hardness"));
  } catch (const BadParam& e) {
    throw IncompatibleCheckpoint(e.what());
  }
  if (n_users != data.n_users() || n_items != data.n_items()) {
    throw IncompatibleCheckpoint("checkpoint has " + std::to_string(n_users) + " users and " +
                                 std::to_string(n_items) + " items; dataset has " +
                                 std::to_string(data.n_users()) + " and " +
                                 std::to_string(data.n_items()));
  }
  auto users = read_table(in, "user");
  auto items = read_table(in, "item");
  auto first = read_table(in, "hardness_first");
  auto second = read_table(in, "hardness_second");
  if (users.rows() != n_users || items.rows() != n_items || users.dim() != dim || items.dim() != dim) {
    throw IncompatibleCheckpoint("table shapes disagree with the header");
  }
  NormAdjacency adj;
  if (kind == Backbone::LightGCN) {
    adj = NormAdjacency::bipartite(data.n_users(), data.n_items(), data.pairs(Split::Train));
  }
  Checkpoint ck{Encoder(kind, std::move(users), std::move(items), layers, tau, std::move(adj)),
                HardnessModel::from_tables(hkind, std::move(first), std::move(second))};
  return ck;
}

}  // namespace advrec
