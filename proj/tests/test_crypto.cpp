#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "simcan/crypto.hpp"
#include "simcan/rng.hpp"

using namespace simcan;
using namespace simcan::crypto;

namespace {

struct Vector {
  std::string name;
  std::string input_raw;
  Bytes key;
  Bytes input;
  Bytes output;
};

std::vector<Vector> load_vectors(const std::string& file) {
  std::ifstream in(std::string(SIMCAN_TESTDATA_DIR) + "/crypto/" + file);
  REQUIRE(in.good());
  std::vector<Vector> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string name, key_hex, in_hex, out_hex;
    std::getline(ss, name, '\t');
    std::getline(ss, key_hex, '\t');
    std::getline(ss, in_hex, '\t');
    std::getline(ss, out_hex, '\t');
    Vector v;
    v.name = name;
    v.input_raw = in_hex;
    REQUIRE(hex_decode(key_hex, v.key));
    v.input = hex_decode_or_empty(in_hex);
    REQUIRE(hex_decode(out_hex, v.output));
    out.push_back(std::move(v));
  }
  REQUIRE_FALSE(out.empty());
  return out;
}

}  // namespace

TEST_CASE("x25519 published test vectors") {
  for (const auto& v : load_vectors("x25519.tsv")) {
    INFO(v.name);
    KeyMaterial priv(v.key, KeyKind::ECC_PRIVATE);
    KeyMaterial pub(v.input, KeyKind::ECC_PUBLIC);
    CHECK(ecdh_shared(priv, pub) == v.output);
  }
}

TEST_CASE("x25519 keypair is deterministic under a fixed seed") {
  RandomSource a(1234), b(1234);
  auto [priv1, pub1] = ecdh_keypair(a);
  auto [priv2, pub2] = ecdh_keypair(b);
  CHECK(priv1.bytes == priv2.bytes);
  CHECK(pub1.bytes == pub2.bytes);
}

TEST_CASE("x25519 distinct seeds give distinct public keys") {
  std::set<Bytes> publics;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomSource rng(seed);
    auto [priv, pub] = ecdh_keypair(rng);
    publics.insert(pub.bytes);
  }
  CHECK(publics.size() == 100);
}

TEST_CASE("x25519 Diffie-Hellman symmetry") {
  RandomSource rng(42);
  for (int i = 0; i < 32; ++i) {
    auto [a_priv, a_pub] = ecdh_keypair(rng);
    auto [b_priv, b_pub] = ecdh_keypair(rng);
    CHECK(ecdh_shared(a_priv, b_pub) == ecdh_shared(b_priv, a_pub));
  }
}

TEST_CASE("x25519 rejects low-order peer keys") {
  std::ifstream in(std::string(SIMCAN_TESTDATA_DIR) + "/crypto/x25519_low_order.txt");
  REQUIRE(in.good());
  RandomSource rng(7);
  auto [priv, pub] = ecdh_keypair(rng);
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Bytes point;
    REQUIRE(hex_decode(line, point));
    KeyMaterial peer(point, KeyKind::ECC_PUBLIC);
    try {
      ecdh_shared(priv, peer);
      FAIL("low-order point accepted: " << line);
    } catch (const SimError& e) {
      CHECK(e.code() == Err::INVALID_PEER_KEY);
    }
    ++count;
  }
  CHECK(count >= 5);
}

TEST_CASE("aes-256-cbc matches the published vector") {
  const auto vecs = load_vectors("aes256_modes.tsv");
  const auto& cbc = vecs[0];
  const auto colon = cbc.input_raw.find(':');
  REQUIRE(colon != std::string::npos);
  Bytes iv = hex_decode_or_empty(cbc.input_raw.substr(0, colon));
  Bytes pt = hex_decode_or_empty(cbc.input_raw.substr(colon + 1));
  REQUIRE(iv.size() == 16);
  REQUIRE(pt.size() == 64);
  KeyMaterial key(cbc.key, KeyKind::SHARED_KEY);

  SECTION("block API, no padding") {
    CHECK(aes_cbc_encrypt_blocks(key, iv, pt) == cbc.output);
    CHECK(aes_cbc_decrypt_blocks(key, iv, cbc.output) == pt);
  }
  SECTION("padded API emits the vector as a prefix plus one pad block") {
    Bytes ct = aes_cbc_encrypt(key, iv, pt);
    REQUIRE(ct.size() == cbc.output.size() + 16);
    CHECK(Bytes(ct.begin(), ct.begin() + cbc.output.size()) == cbc.output);
    CHECK(aes_cbc_decrypt(key, iv, ct) == pt);
  }
}

TEST_CASE("aes-256-ecb single block matches the published vector") {
  const auto vecs = load_vectors("aes256_modes.tsv");
  const auto& ecb = vecs[1];
  KeyMaterial key(ecb.key, KeyKind::CARMAKER_KEY);
  CHECK(aes_ecb_encrypt_block(key, ecb.input) == ecb.output);
}

TEST_CASE("cbc round-trip identity for lengths 0..512") {
  RandomSource rng(99);
  KeyMaterial key(rng.bytes(32), KeyKind::SHARED_KEY);
  for (std::size_t len : {std::size_t{0}, std::size_t{1}, std::size_t{15},
                          std::size_t{16}, std::size_t{17}, std::size_t{100},
                          std::size_t{512}}) {
    Bytes iv = rng.bytes(16);
    Bytes pt = rng.bytes(len);
    Bytes ct = aes_cbc_encrypt(key, iv, pt);
    CHECK(ct.size() == ((len / 16) + 1) * 16);
    CHECK(aes_cbc_decrypt(key, iv, ct) == pt);
  }
}

TEST_CASE("cbc empty plaintext yields one full padding block") {
  RandomSource rng(1);
  KeyMaterial key(rng.bytes(32), KeyKind::SHARED_KEY);
  Bytes iv = rng.bytes(16);
  CHECK(aes_cbc_encrypt(key, iv, Bytes{}).size() == 16);
}

TEST_CASE("cbc rejects wrong key length") {
  RandomSource rng(2);
  KeyMaterial short_key(rng.bytes(16), KeyKind::PL_KEY);
  Bytes iv = rng.bytes(16);
  try {
    aes_cbc_encrypt(short_key, iv, to_bytes("x"));
    FAIL("16-byte key accepted for AES-256");
  } catch (const SimError& e) {
    CHECK(e.code() == Err::KEY_LEN_ERROR);
  }
}

TEST_CASE("aes-cmac matches the published vectors") {
  for (const auto& v : load_vectors("cmac_aes256.tsv")) {
    INFO(v.name);
    KeyMaterial key(v.key, KeyKind::PL_KEY);
    MacAlgo algo(MacVariant::CMAC_AES256, 128);
    CHECK(mac(algo, key, v.input) == v.output);
  }
}

TEST_CASE("hmac-sha256 matches the published vectors") {
  for (const auto& v : load_vectors("hmac_sha256.tsv")) {
    INFO(v.name);
    // RFC keys are not simulator key sizes; call the raw primitive
    Bytes got = crypto::detail::mac_raw("HMAC", OSSL_MAC_PARAM_DIGEST, "SHA256",
                                        v.key, v.input);
    CHECK(got == v.output);
  }
}

TEST_CASE("mac digests are deterministic and truncation is a prefix") {
  RandomSource rng(5);
  KeyMaterial key(rng.bytes(32), KeyKind::PL_KEY);
  const Bytes msg = rng.bytes(48);

  const Bytes c128 = mac(MacAlgo(MacVariant::CMAC_AES256, 128), key, msg);
  const Bytes c64 = mac(MacAlgo(MacVariant::CMAC_AES256, 64), key, msg);
  CHECK(c128.size() == 16);
  CHECK(c64 == Bytes(c128.begin(), c128.begin() + 8));
  CHECK(mac(MacAlgo(MacVariant::CMAC_AES256, 128), key, msg) == c128);

  const Bytes h256 = mac(MacAlgo(MacVariant::HASH_MAC_256, 256), key, msg);
  const Bytes h128 = mac(MacAlgo(MacVariant::HASH_MAC_256, 128), key, msg);
  const Bytes h64 = mac(MacAlgo(MacVariant::HASH_MAC_256, 64), key, msg);
  CHECK(h256.size() == 32);
  CHECK(h128 == Bytes(h256.begin(), h256.begin() + 16));
  CHECK(h64 == Bytes(h256.begin(), h256.begin() + 8));
}

TEST_CASE("single-bit flips always change the digest") {
  RandomSource rng(6);
  KeyMaterial key(rng.bytes(32), KeyKind::PL_KEY);
  MacAlgo algo(MacVariant::CMAC_AES256, 128);
  int flips = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Bytes msg = rng.bytes(32);
    const Bytes base = mac(algo, key, msg);
    const std::size_t bit = static_cast<std::size_t>(rng.below(msg.size() * 8));
    msg[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    if (mac(algo, key, msg) != base) ++flips;
  }
  CHECK(flips == 1000);
}

TEST_CASE("mac variant and digest length constraints") {
  RandomSource rng(7);
  KeyMaterial key32(rng.bytes(32), KeyKind::PL_KEY);
  KeyMaterial key16(rng.bytes(16), KeyKind::PL_KEY);

  CHECK_THROWS_AS(MacAlgo(MacVariant::CMAC_AES256, 256), SimError);
  try {
    mac(MacAlgo(MacVariant::CMAC_AES256, 128), key16, to_bytes("m"));
    FAIL("CMAC accepted a 16-byte key");
  } catch (const SimError& e) {
    CHECK(e.code() == Err::KEY_LEN_ERROR);
  }
  // the hash variant accepts any legal symmetric key length
  CHECK(mac(MacAlgo(MacVariant::HASH_MAC_256, 256), key16, to_bytes("m")).size() ==
        32);
}

TEST_CASE("kdf golden vectors") {
  const std::vector<Bytes> inputs = {
      hex_decode_or_empty("00112233445566778899aabbccddeeff"),
      hex_decode_or_empty("0102030405060708")};
  std::ifstream in(std::string(SIMCAN_TESTDATA_DIR) + "/crypto/kdf_golden.tsv");
  REQUIRE(in.good());
  std::string line;
  int checked = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string name, label, in_hex, out_hex;
    std::getline(ss, name, '\t');
    std::getline(ss, label, '\t');
    std::getline(ss, in_hex, '\t');
    std::getline(ss, out_hex, '\t');
    Bytes expect;
    REQUIRE(hex_decode(out_hex, expect));
    KeyMaterial got = kdf(inputs, label, expect.size());
    INFO(name);
    CHECK(got.bytes == expect);
    ++checked;
  }
  CHECK(checked == 4);
}

TEST_CASE("kdf domain separation and order sensitivity") {
  RandomSource rng(8);
  const Bytes a = rng.bytes(16), b = rng.bytes(16);
  CHECK(kdf({a, b}, "KSH", 32).bytes != kdf({a, b}, "TRANSPORT", 32).bytes);
  CHECK(kdf({a, b}, "KSH", 32).bytes != kdf({b, a}, "KSH", 32).bytes);
  CHECK_THROWS_AS(kdf({a}, "KSH", 24), SimError);
}

TEST_CASE("key material length validation") {
  CHECK_THROWS_AS(KeyMaterial(Bytes(7, 0), KeyKind::PL_KEY), SimError);
  CHECK_THROWS_AS(KeyMaterial(Bytes(16, 0), KeyKind::ECC_PRIVATE), SimError);
  CHECK_NOTHROW(KeyMaterial(Bytes(8, 0), KeyKind::PL_KEY));
  CHECK_NOTHROW(KeyMaterial(Bytes(32, 0), KeyKind::ECC_PUBLIC));
}

TEST_CASE("nonces come from the deterministic source") {
  RandomSource a(11), b(11);
  CHECK(Nonce::generate(a) == Nonce::generate(b));
  RandomSource c(12);
  CHECK_FALSE(Nonce::generate(c) == Nonce::generate(c));
}
