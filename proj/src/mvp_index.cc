#include "statefuzz/mvp_index.h"

#include <algorithm>
#include <array>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace statefuzz {
namespace {

// Relaxed triangle factors per distance component.
constexpr double kHeaderFactor = 12.0;
constexpr double kBodyFactor = 2.0;

struct Range {
  uint32_t lo = std::numeric_limits<uint32_t>::max();
  uint32_t hi = 0;
  void Add(uint32_t v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

// Lower bound on d(q, x) given d(q, v) and d(v, x) in [r.lo, r.hi].
double ComponentBound(uint32_t dqv, const Range& r, double factor) {
  const double q = dqv;
  return std::max({0.0, r.lo / factor - q, q / factor - r.hi});
}

uint32_t Median(std::vector<uint32_t> v) {
  auto mid = v.begin() + (v.size() - 1) / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

struct StateRegistry::Node {
  bool leaf = true;
  std::vector<StateId> items;  // leaf payload

  StateId vp1 = 0;
  StateId vp2 = 0;
  uint32_t split1 = 0;
  std::array<uint32_t, 2> split2{};
  struct Bounds {
    Range h1, b1, h2, b2;
  };
  std::array<Bounds, 4> bounds;
  std::array<std::unique_ptr<Node>, 4> children;
};

struct StateRegistry::Best {
  uint32_t dist = std::numeric_limits<uint32_t>::max();
  StateId id = 0;
  bool found = false;

  void Offer(uint32_t d, StateId candidate, uint32_t radius) {
    if (d > radius) return;
    if (!found || d < dist || (d == dist && candidate < id)) {
      dist = d;
      id = candidate;
      found = true;
    }
  }
  double Limit(uint32_t radius) const { return found ? std::min(dist, radius) : radius; }
};

StateRegistry::StateRegistry() : root_(std::make_unique<Node>()) {}
StateRegistry::~StateRegistry() = default;
StateRegistry::StateRegistry(StateRegistry&&) noexcept = default;
StateRegistry& StateRegistry::operator=(StateRegistry&&) noexcept = default;

TlshDistanceParts StateRegistry::Dist(StateId a, StateId b) const {
  return TlshDistanceSplit(entries_[a - 1], entries_[b - 1]);
}

StateId StateRegistry::Insert(const TlshDigest& h) {
  if (!h.valid) throw std::invalid_argument("cannot register an invalid digest");
  entries_.push_back(h);
  const auto id = static_cast<StateId>(entries_.size());
  InsertInto(*root_, id);
  return id;
}

void StateRegistry::InsertInto(Node& node, StateId id) {
  if (node.leaf) {
    node.items.push_back(id);
    if (node.items.size() <= kLeafCapacity) return;

    // Overflow: turn this leaf into an internal node with two vantage points.
    std::vector<StateId> items = std::move(node.items);
    node.items.clear();
    node.leaf = false;
    node.vp1 = items.front();
    StateId far = items[1];
    uint32_t far_d = 0;
    for (size_t i = 1; i < items.size(); ++i) {
      const uint32_t d = Dist(node.vp1, items[i]).total();
      if (d > far_d) {
        far_d = d;
        far = items[i];
      }
    }
    node.vp2 = far;

    std::vector<StateId> rest;
    for (StateId x : items) {
      if (x != node.vp1 && x != node.vp2) rest.push_back(x);
    }
    std::vector<uint32_t> d1;
    for (StateId x : rest) d1.push_back(Dist(node.vp1, x).total());
    node.split1 = Median(d1);
    for (int half = 0; half < 2; ++half) {
      std::vector<uint32_t> d2;
      for (size_t i = 0; i < rest.size(); ++i) {
        if ((d1[i] <= node.split1) == (half == 0)) d2.push_back(Dist(node.vp2, rest[i]).total());
      }
      node.split2[half] = d2.empty() ? 0 : Median(d2);
    }
    for (StateId x : rest) InsertInto(node, x);
    return;
  }

  const TlshDistanceParts p1 = Dist(node.vp1, id);
  const TlshDistanceParts p2 = Dist(node.vp2, id);
  const int half = p1.total() <= node.split1 ? 0 : 1;
  const int child = 2 * half + (p2.total() <= node.split2[half] ? 0 : 1);
  auto& b = node.bounds[child];
  b.h1.Add(p1.header);
  b.b1.Add(p1.body);
  b.h2.Add(p2.header);
  b.b2.Add(p2.body);
  if (!node.children[child]) node.children[child] = std::make_unique<Node>();
  InsertInto(*node.children[child], id);
}

void StateRegistry::Search(const Node& node, const TlshDigest& h, uint32_t radius,
                           Best& best) const {
  if (node.leaf) {
    for (StateId x : node.items) {
      ++distance_evals_;
      best.Offer(TlshDistanceSplit(h, entries_[x - 1]).total(), x, radius);
    }
    return;
  }
  distance_evals_ += 2;
  const TlshDistanceParts q1 = TlshDistanceSplit(h, entries_[node.vp1 - 1]);
  const TlshDistanceParts q2 = TlshDistanceSplit(h, entries_[node.vp2 - 1]);
  best.Offer(q1.total(), node.vp1, radius);
  best.Offer(q2.total(), node.vp2, radius);

  std::array<std::pair<double, int>, 4> order;
  int n = 0;
  for (int c = 0; c < 4; ++c) {
    if (!node.children[c]) continue;
    const auto& b = node.bounds[c];
    const double header = std::max(ComponentBound(q1.header, b.h1, kHeaderFactor),
                                   ComponentBound(q2.header, b.h2, kHeaderFactor));
    const double body = std::max(ComponentBound(q1.body, b.b1, kBodyFactor),
                                 ComponentBound(q2.body, b.b2, kBodyFactor));
    order[n++] = {header + body, c};
  }
  std::sort(order.begin(), order.begin() + n);
  for (int i = 0; i < n; ++i) {
    // Equality must still be explored: a tie may carry a lower id.
    if (order[i].first > best.Limit(radius)) break;
    Search(*node.children[order[i].second], h, radius, best);
  }
}

std::optional<StateId> StateRegistry::Lookup(const TlshDigest& h, uint32_t radius) const {
  if (!h.valid || entries_.empty()) return std::nullopt;
  Best best;
  Search(*root_, h, radius, best);
  if (!best.found) return std::nullopt;
  return best.id;
}

StateId StateRegistry::GetStateId(const TlshDigest& h, uint32_t epsilon) {
  if (!h.valid) return kInitialState;
  if (auto id = Lookup(h, epsilon)) return *id;
  return Insert(h);
}

nlohmann::json StateRegistry::ToJson() const {
  nlohmann::json out = nlohmann::json::array();
  for (size_t i = 0; i < entries_.size(); ++i) {
    out.push_back({{"state_id", i + 1}, {"digest", entries_[i].ToHex()}});
  }
  return out;
}

StateRegistry StateRegistry::FromJson(const nlohmann::json& j) {
  StateRegistry r;
  for (const auto& e : j) {
    auto d = TlshDigest::FromHex(e.at("digest").get<std::string>());
    if (!d || !d->valid) throw std::runtime_error("bad digest in registry export");
    const StateId id = r.Insert(*d);
    if (id != e.at("state_id").get<StateId>()) {
      throw std::runtime_error("registry export ids are not dense");
    }
  }
  return r;
}

}  // namespace statefuzz
