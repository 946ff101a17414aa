#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "simcan/keys.hpp"

using namespace simcan;
using namespace simcan::keys;

TEST_CASE("generate_pl_keys: five distinct active epoch-0 entries") {
  RandomSource rng(1);
  auto m = generate_pl_keys(rng, 5, 32, 500'000);
  REQUIRE(m.size() == 5);
  std::set<Bytes> distinct;
  for (const auto& [lvl, e] : m) {
    CHECK(e.epoch == 0);
    CHECK(e.status == KeyStatus::ACTIVE);
    CHECK(e.key_len() == 32);
    distinct.insert(e.key.bytes);
  }
  CHECK(distinct.size() == 5);
}

TEST_CASE("crypto-engine capacity bounds the key set") {
  RandomSource rng(2);
  // 16 keys of 16 bytes fill the 256-byte engine exactly
  CHECK(generate_pl_keys(rng, 16, 16, 0).size() == 16);
  try {
    generate_pl_keys(rng, 17, 16, 0);
    FAIL("17x16 bytes fit a 256-byte engine");
  } catch (const SimError& e) {
    CHECK(e.code() == Err::CAPACITY_ERROR);
  }
}

TEST_CASE("key store capacity holds across mutations") {
  RandomSource rng(3);
  KeyStore store(1, 256);
  for (Level l = 1; l <= 16; ++l) {
    PLKeyEntry e;
    e.key = crypto::KeyMaterial(rng.bytes(16), crypto::KeyKind::PL_KEY);
    store.install(l, e);
  }
  CHECK(store.used_bytes() == 256);
  PLKeyEntry extra;
  extra.key = crypto::KeyMaterial(rng.bytes(16), crypto::KeyKind::PL_KEY);
  CHECK_THROWS_AS(store.install_short(1, extra), SimError);
  // replacing an entry of the same size does not grow usage
  PLKeyEntry repl;
  repl.key = crypto::KeyMaterial(rng.bytes(16), crypto::KeyKind::PL_KEY);
  repl.epoch = 1;
  CHECK_NOTHROW(store.install(7, repl));
  CHECK(store.used_bytes() == 256);
}

TEST_CASE("roll increments the epoch and changes the key") {
  RandomSource rng(4);
  auto m = generate_pl_keys(rng, 5, 32, 100'000);
  // push level 3 to epoch 4
  for (int i = 0; i < 4; ++i) m[3] = roll_key(m, 3, rng);
  const Bytes old_key = m[3].key.bytes;
  PLKeyEntry next = roll_key(m, 3, rng);
  CHECK(next.epoch == 5);
  CHECK(next.key.bytes != old_key);
  CHECK(next.status == KeyStatus::ACTIVE);
  CHECK_THROWS_AS(roll_key(m, 9, rng), SimError);
}

TEST_CASE("epoch monotonicity and no key reuse across many rolls") {
  RandomSource rng(5);
  auto m = generate_pl_keys(rng, 3, 32, 0);
  std::set<Bytes> seen;
  for (const auto& [lvl, e] : m) seen.insert(e.key.bytes);
  std::uint32_t last_epoch = 0;
  for (int i = 0; i < 200; ++i) {
    PLKeyEntry next = roll_key(m, 2, rng);
    CHECK(next.epoch == last_epoch + 1);
    last_epoch = next.epoch;
    CHECK(seen.insert(next.key.bytes).second);
    m[2] = next;
  }
}

TEST_CASE("select_key picks the less privileged of the two levels") {
  RandomSource rng(6);
  KeyStore store(3, 256);
  for (Level l = 3; l <= 5; ++l) {
    PLKeyEntry e;
    e.key = crypto::KeyMaterial(rng.bytes(32), crypto::KeyKind::PL_KEY);
    store.install(l, e);
  }
  CHECK(&store.select_key(5) == store.entry(5));
  CHECK(&store.select_key(3) == store.entry(3));
  try {
    store.select_key(2);
    FAIL("peer above own privilege accepted");
  } catch (const SimError& e) {
    CHECK(e.code() == Err::PRIVILEGE_VIOLATION);
  }
}

TEST_CASE("stores hold keys only from their own level down") {
  RandomSource rng(7);
  KeyStore store(3, 256);
  PLKeyEntry e;
  e.key = crypto::KeyMaterial(rng.bytes(32), crypto::KeyKind::PL_KEY);
  CHECK_THROWS_AS(store.install(2, e), SimError);
  CHECK_NOTHROW(store.install(3, e));
}

TEST_CASE("short key mode") {
  RandomSource rng(8);
  KeyStore store(3, 256);
  PLKeyEntry full;
  full.key = crypto::KeyMaterial(rng.bytes(32), crypto::KeyKind::PL_KEY);
  store.install(3, full);

  SECTION("unavailable without provisioned short keys") {
    try {
      store.enter_short_key_mode({3});
      FAIL("short mode without short keys");
    } catch (const SimError& e) {
      CHECK(e.code() == Err::MODE_UNAVAILABLE);
    }
  }
  SECTION("enter switches selection, exit restores, re-enter is idempotent") {
    PLKeyEntry sh;
    sh.key = crypto::KeyMaterial(rng.bytes(16), crypto::KeyKind::PL_KEY);
    store.install_short(3, sh);
    store.enter_short_key_mode({3});
    CHECK(store.select_key(3).key_len() == 16);
    store.enter_short_key_mode({3});  // idempotent
    CHECK(store.select_key(3).key_len() == 16);
    store.exit_short_key_mode();
    CHECK(store.select_key(3).key_len() == 32);
  }
}

TEST_CASE("deprecation plans exclude the compromised node and spare higher levels") {
  RandomSource rng(9);
  KeyStore store(1, 256);
  auto generated = generate_pl_keys(rng, 5, 32, 0);
  for (auto& [lvl, e] : generated) store.install(lvl, e);
  const Bytes k1 = store.entry(1)->key.bytes;
  const Bytes k2 = store.entry(2)->key.bytes;
  const std::uint32_t old_epoch = store.entry(3)->epoch;

  // nodes: 10 at PL3 (compromised), 11 at PL3, 12 at PL2, 13 at PL5
  std::vector<std::pair<NodeId, Level>> members = {
      {10, 3}, {11, 3}, {12, 2}, {13, 5}};
  KeyRolloverPlan plan = deprecate(store, 3, 10, members, rng);

  CHECK(plan.level == 3);
  CHECK(plan.deprecated_epoch == old_epoch);
  CHECK(plan.new_entry.epoch == old_epoch + 1);
  CHECK(plan.recipients == std::vector<NodeId>{11, 12});
  // levels 1-2 untouched
  CHECK(store.entry(1)->key.bytes == k1);
  CHECK(store.entry(2)->key.bytes == k2);
  CHECK(store.entry(3)->status == KeyStatus::ACTIVE);  // successor installed
  CHECK(store.entry(3)->epoch == old_epoch + 1);
}

TEST_CASE("deprecation with no other holders still rolls the key") {
  RandomSource rng(10);
  KeyStore store(1, 256);
  for (auto& [lvl, e] : generate_pl_keys(rng, 5, 32, 0)) store.install(lvl, e);
  std::vector<std::pair<NodeId, Level>> members = {{10, 5}};
  KeyRolloverPlan plan = deprecate(store, 5, 10, members, rng);
  CHECK(plan.recipients.empty());
  CHECK(store.entry(5)->epoch == 1);
}

TEST_CASE("double deprecation of a dead level is rejected") {
  RandomSource rng(11);
  std::map<Level, PLKeyEntry> m = generate_pl_keys(rng, 3, 32, 0);
  m[2].status = KeyStatus::DEPRECATED;
  try {
    deprecate(m, 2, 1, {}, rng);
    FAIL("deprecated level re-deprecated");
  } catch (const SimError& e) {
    CHECK(e.code() == Err::DOUBLE_DEPRECATE);
  }
}

TEST_CASE("grace entries survive installs until dropped") {
  RandomSource rng(12);
  KeyStore store(2, 256);
  PLKeyEntry e0;
  e0.key = crypto::KeyMaterial(rng.bytes(32), crypto::KeyKind::PL_KEY);
  e0.epoch = 0;
  store.install(2, e0);
  PLKeyEntry e1 = e0;
  e1.key = crypto::KeyMaterial(rng.bytes(32), crypto::KeyKind::PL_KEY);
  e1.epoch = 1;
  store.install(2, e1);
  REQUIRE(store.grace_entry(2) != nullptr);
  CHECK(store.grace_entry(2)->epoch == 0);
  store.drop_grace(2);
  CHECK(store.grace_entry(2) == nullptr);
}
