#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "simcan/crypto.hpp"
#include "simcan/errors.hpp"
#include "simcan/rng.hpp"
#include "simcan/sim.hpp"

namespace simcan::keys {

using sim::Time;
using NodeId = int;

/// Privilege level: 1 is the most privileged (the secure gateway);
/// larger numbers are less privileged.
using Level = int;

enum class KeyStatus { ACTIVE, DEPRECATED };

struct PLKeyEntry {
  crypto::KeyMaterial key;
  std::uint32_t epoch = 0;
  KeyStatus status = KeyStatus::ACTIVE;
  Time rolling_period_us = 0;

  std::size_t key_len() const { return key.size(); }
};

struct KeyAuditEvent {
  Time time_us = 0;
  Level level = 0;
  std::uint32_t epoch = 0;
  std::string action;  // GEN | ROLL | DEPRECATE | SHORT
  std::vector<std::string> recipients;
};

/// Re-keying order produced by a deprecation: every holder of the level key
/// except the compromised node gets the successor epoch over its pairwise
/// shared key.
struct KeyRolloverPlan {
  Level level = 0;
  std::uint32_t deprecated_epoch = 0;
  PLKeyEntry new_entry;
  std::vector<NodeId> recipients;
};

/// Per-node key store. Holds the privilege-level keys from the node's own
/// level down, the pairwise key shared with the gateway, and the carmaker
/// secret. Capacity models the crypto engine's key slots and is charged
/// only for privilege-level material.
class KeyStore {
 public:
  KeyStore() = default;
  KeyStore(Level own_level, std::size_t capacity_bytes = 256)
      : own_level_(own_level), capacity_bytes_(capacity_bytes) {}

  Level own_level() const { return own_level_; }
  std::size_t capacity_bytes() const { return capacity_bytes_; }

  std::size_t used_bytes() const {
    std::size_t used = 0;
    for (const auto& [lvl, e] : pl_) used += e.key_len();
    for (const auto& [lvl, e] : short_pl_) used += e.key_len();
    return used;
  }

  void install(Level level, PLKeyEntry entry) {
    if (level < own_level_)
      raise(Err::PRIVILEGE_VIOLATION, "key above own privilege level");
    check_capacity(entry.key_len(), pl_.count(level) ? pl_[level].key_len() : 0);
    auto it = pl_.find(level);
    if (it != pl_.end() && entry.epoch > it->second.epoch)
      grace_[level] = it->second;  // keep the outgoing key for in-flight frames
    pl_[level] = std::move(entry);
  }

  void install_short(Level level, PLKeyEntry entry) {
    if (level < own_level_)
      raise(Err::PRIVILEGE_VIOLATION, "key above own privilege level");
    check_capacity(entry.key_len(),
                   short_pl_.count(level) ? short_pl_[level].key_len() : 0);
    short_pl_[level] = std::move(entry);
  }

  bool has_level(Level level) const { return pl_.count(level) > 0; }

  const PLKeyEntry* entry(Level level) const {
    auto it = pl_.find(level);
    return it == pl_.end() ? nullptr : &it->second;
  }

  PLKeyEntry* entry_mut(Level level) {
    auto it = pl_.find(level);
    return it == pl_.end() ? nullptr : &it->second;
  }

  const PLKeyEntry* short_entry(Level level) const {
    auto it = short_pl_.find(level);
    return it == short_pl_.end() ? nullptr : &it->second;
  }

  const PLKeyEntry* grace_entry(Level level) const {
    auto it = grace_.find(level);
    return it == grace_.end() ? nullptr : &it->second;
  }

  void drop_grace(Level level) { grace_.erase(level); }

  /// Key used to talk to a peer at the given level: the less privileged of
  /// the two levels. Short-mode levels resolve to their short entry.
  const PLKeyEntry& select_key(Level peer_level) const {
    if (peer_level < own_level_)
      raise(Err::PRIVILEGE_VIOLATION, "peer is more privileged");
    const Level lvl = std::max(own_level_, peer_level);
    if (short_mode_.count(lvl)) {
      const PLKeyEntry* s = short_entry(lvl);
      if (s) return *s;
    }
    const PLKeyEntry* e = entry(lvl);
    if (!e) raise(Err::NO_SUCH_LEVEL, "no key for level " + std::to_string(lvl));
    return *e;
  }

  void enter_short_key_mode(const std::set<Level>& levels) {
    for (Level l : levels)
      if (!short_pl_.count(l))
        raise(Err::MODE_UNAVAILABLE, "short key not provisioned for level " +
                                         std::to_string(l));
    short_mode_.insert(levels.begin(), levels.end());
  }

  void exit_short_key_mode() { short_mode_.clear(); }

  bool in_short_mode(Level level) const { return short_mode_.count(level) > 0; }

  void set_shared_with_gateway(crypto::KeyMaterial k) { shared_with_gateway_ = std::move(k); }
  const std::optional<crypto::KeyMaterial>& shared_with_gateway() const {
    return shared_with_gateway_;
  }

  void set_carmaker_secret(crypto::KeyMaterial k) { carmaker_secret_ = std::move(k); }
  const std::optional<crypto::KeyMaterial>& carmaker_secret() const {
    return carmaker_secret_;
  }

  std::vector<Level> held_levels() const {
    std::vector<Level> out;
    for (const auto& [lvl, e] : pl_) out.push_back(lvl);
    return out;
  }

 private:
  void check_capacity(std::size_t incoming, std::size_t replacing) const {
    if (used_bytes() + incoming - replacing > capacity_bytes_)
      raise(Err::CAPACITY_ERROR, "key store capacity exceeded");
  }

  Level own_level_ = 1;
  std::size_t capacity_bytes_ = 256;
  std::map<Level, PLKeyEntry> pl_;
  std::map<Level, PLKeyEntry> short_pl_;
  std::map<Level, PLKeyEntry> grace_;
  std::set<Level> short_mode_;
  std::optional<crypto::KeyMaterial> shared_with_gateway_;
  std::optional<crypto::KeyMaterial> carmaker_secret_;
};

/// Gateway-side bootstrap: one independent key per level, epoch 0.
inline std::map<Level, PLKeyEntry> generate_pl_keys(RandomSource& rng, int n_levels,
                                                    std::size_t key_len,
                                                    Time rolling_period_us,
                                                    std::size_t capacity_bytes = 256) {
  if (static_cast<std::size_t>(n_levels) * key_len > capacity_bytes)
    raise(Err::CAPACITY_ERROR, "level keys exceed crypto-engine capacity");
  std::map<Level, PLKeyEntry> out;
  for (Level l = 1; l <= n_levels; ++l) {
    PLKeyEntry e;
    e.key = crypto::KeyMaterial(rng.bytes(key_len), crypto::KeyKind::PL_KEY);
    e.epoch = 0;
    e.status = KeyStatus::ACTIVE;
    e.rolling_period_us = rolling_period_us;
    out.emplace(l, std::move(e));
  }
  return out;
}

/// Successor key for one level: fresh bytes, epoch + 1, ACTIVE.
inline PLKeyEntry roll_key(const std::map<Level, PLKeyEntry>& current, Level level,
                           RandomSource& rng) {
  auto it = current.find(level);
  if (it == current.end())
    raise(Err::NO_SUCH_LEVEL, "cannot roll unknown level " + std::to_string(level));
  PLKeyEntry next;
  next.key = crypto::KeyMaterial(rng.bytes(it->second.key_len()),
                                 crypto::KeyKind::PL_KEY);
  next.epoch = it->second.epoch + 1;
  next.status = KeyStatus::ACTIVE;
  next.rolling_period_us = it->second.rolling_period_us;
  return next;
}

/// Deprecate a level after a detected violation. The successor goes to every
/// node privileged enough to hold the level key except the compromised one;
/// the compromised node keeps only its lower-privilege keys.
inline KeyRolloverPlan deprecate(std::map<Level, PLKeyEntry>& current, Level level,
                                 NodeId compromised,
                                 const std::vector<std::pair<NodeId, Level>>& members,
                                 RandomSource& rng) {
  auto it = current.find(level);
  if (it == current.end())
    raise(Err::NO_SUCH_LEVEL, "cannot deprecate unknown level");
  if (it->second.status == KeyStatus::DEPRECATED)
    raise(Err::DOUBLE_DEPRECATE, "level already deprecated without successor");

  KeyRolloverPlan plan;
  plan.level = level;
  plan.deprecated_epoch = it->second.epoch;
  it->second.status = KeyStatus::DEPRECATED;
  plan.new_entry = PLKeyEntry{
      crypto::KeyMaterial(rng.bytes(it->second.key_len()), crypto::KeyKind::PL_KEY),
      it->second.epoch + 1, KeyStatus::ACTIVE, it->second.rolling_period_us};
  for (const auto& [node, lvl] : members)
    if (lvl <= level && node != compromised) plan.recipients.push_back(node);
  current[level] = plan.new_entry;
  return plan;
}

/// Same operation against a gateway key store. No grace copy survives: the
/// deprecated key is compromised, so in-flight frames under it must fail.
inline KeyRolloverPlan deprecate(KeyStore& store, Level level, NodeId compromised,
                                 const std::vector<std::pair<NodeId, Level>>& members,
                                 RandomSource& rng) {
  PLKeyEntry* e = store.entry_mut(level);
  if (e == nullptr) raise(Err::NO_SUCH_LEVEL, "cannot deprecate unknown level");
  if (e->status == KeyStatus::DEPRECATED)
    raise(Err::DOUBLE_DEPRECATE, "level already deprecated without successor");

  KeyRolloverPlan plan;
  plan.level = level;
  plan.deprecated_epoch = e->epoch;
  plan.new_entry = PLKeyEntry{
      crypto::KeyMaterial(rng.bytes(e->key_len()), crypto::KeyKind::PL_KEY),
      e->epoch + 1, KeyStatus::ACTIVE, e->rolling_period_us};
  for (const auto& [node, lvl] : members)
    if (lvl <= level && node != compromised) plan.recipients.push_back(node);
  store.install(level, plan.new_entry);
  store.drop_grace(level);
  return plan;
}

}  // namespace simcan::keys
