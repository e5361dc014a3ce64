#include "atproto/repo.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "atproto/crypto.hpp"
#include "atproto/varint.hpp"
#include "test_util.hpp"

using namespace atproto;
using codec::Cid;
using codec::Value;
using repo::Mst;
using repo::RecordPath;
using repo::RepoError;
using repo::RepoErrorKind;
using repo::Repository;
using repo::RepoWrite;

namespace {

crypto::KeyPair test_key(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Bytes s(32);
  for (auto& b : s) b = static_cast<std::uint8_t>(rng());
  return crypto::keypair_from_seed(s);
}

repo::Signer signer_for(const crypto::KeyPair& key) {
  return [&key](BytesView msg) { return crypto::sign(msg, key); };
}

std::string key_of(std::mt19937_64& rng) {
  return "app.bsky.feed.post/" + testutil::random_rkey(rng);
}

Cid record_cid(std::uint64_t n) {
  Bytes payload;
  for (int i = 0; i < 8; ++i) payload.push_back(static_cast<std::uint8_t>(n >> (i * 8)));
  return Cid::of(payload);
}

Cid build_root(repo::MemoryBlockStore& store, const std::map<std::string, Cid>& entries,
               std::vector<std::string> order) {
  Mst tree;
  for (const std::string& key : order) tree.put(key, entries.at(key));
  return tree.persist(store);
}

}  // namespace

TEST_SUITE("mst") {

TEST_CASE("root cid is independent of insertion order") {
  std::mt19937_64 rng(1234);
  for (int round = 0; round < 25; ++round) {
    std::map<std::string, Cid> entries;
    size_t n = 1 + rng() % 200;
    while (entries.size() < n) entries.emplace(key_of(rng), record_cid(rng()));
    std::vector<std::string> order;
    for (const auto& [key, cid] : entries) {
      (void)cid;
      order.push_back(key);
    }
    repo::MemoryBlockStore store;
    Cid first = build_root(store, entries, order);
    for (int shuffle = 0; shuffle < 3; ++shuffle) {
      std::shuffle(order.begin(), order.end(), rng);
      CHECK(build_root(store, entries, order) == first);
    }
  }
}

TEST_CASE("insert then delete returns to the previous root") {
  std::mt19937_64 rng(77);
  Mst tree;
  repo::MemoryBlockStore store;
  for (int i = 0; i < 50; ++i) tree.put(key_of(rng), record_cid(rng()));
  Cid before = tree.persist(store);
  std::string fresh = "app.bsky.feed.like/zzz-fresh-key";
  tree.put(fresh, record_cid(1));
  CHECK(tree.persist(store) != before);
  CHECK(tree.remove(fresh));
  CHECK(tree.persist(store) == before);
}

TEST_CASE("enumeration matches a reference map through random edits") {
  std::mt19937_64 rng(555);
  Mst tree;
  std::map<std::string, Cid> reference;
  std::vector<std::string> keys;
  for (int i = 0; i < 800; ++i) {
    bool del = !keys.empty() && rng() % 3 == 0;
    if (del) {
      std::string key = keys[rng() % keys.size()];
      bool was_present = reference.erase(key) > 0;
      CHECK(tree.remove(key) == was_present);
      if (was_present) keys.erase(std::find(keys.begin(), keys.end(), key));
    } else {
      std::string key = key_of(rng);
      Cid cid = record_cid(rng());
      if (!reference.count(key)) keys.push_back(key);
      reference[key] = cid;
      tree.put(key, cid);
    }
  }
  auto entries = tree.entries();
  REQUIRE(entries.size() == reference.size());
  auto it = reference.begin();
  for (const auto& entry : entries) {
    CHECK(entry.key == it->first);
    CHECK(entry.value == it->second);
    ++it;
  }
  // value lookups agree
  for (const auto& [key, cid] : reference) {
    auto got = tree.get(key);
    REQUIRE(got.has_value());
    CHECK(*got == cid);
  }
}

TEST_CASE("persist then load reproduces the tree") {
  std::mt19937_64 rng(31337);
  Mst tree;
  for (int i = 0; i < 300; ++i) tree.put(key_of(rng), record_cid(rng()));
  repo::MemoryBlockStore store;
  Cid root = tree.persist(store);
  Mst loaded = Mst::load(store, root);
  CHECK(loaded.persist(store) == root);
  CHECK(loaded.entries().size() == tree.entries().size());
}

TEST_CASE("depth stays logarithmic") {
  std::mt19937_64 rng(2024);
  std::map<std::string, Cid> entries;
  while (entries.size() < 10'000) entries.emplace(key_of(rng), record_cid(rng()));
  Mst tree;
  for (const auto& [key, cid] : entries) tree.put(key, cid);
  repo::MemoryBlockStore store;
  Cid root = tree.persist(store);
  // proof path length <= depth + 1; log4(10000) ~ 6.6
  size_t worst = 0;
  int probes = 0;
  for (const auto& [key, cid] : entries) {
    (void)cid;
    if (++probes > 200) break;
    auto proof = repo::build_proof(store, root, key);
    worst = std::max(worst, proof.blocks.size());
  }
  CHECK(worst <= 12);
}

}  // TEST_SUITE

TEST_SUITE("repo") {

TEST_CASE("write then read returns the same record") {
  repo::MemoryBlockStore store;
  auto key = test_key(1);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  Value::Map m;
  m.emplace("text", Value("hello"));
  auto result = repository.apply_writes(
      {RepoWrite::put({"app.bsky.feed.post", "3k1"}, Value(m))}, signer_for(key));
  REQUIRE(result.ops.size() == 1);
  auto read = repository.get_record({"app.bsky.feed.post", "3k1"});
  REQUIRE(read.has_value());
  CHECK(read->first == Value(m));
  CHECK(read->second == codec::cid_of(codec::encode(Value(m))));
}

TEST_CASE("get of an absent or deleted path returns nothing") {
  repo::MemoryBlockStore store;
  auto key = test_key(2);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  CHECK_FALSE(repository.get_record({"app.bsky.feed.post", "nope"}).has_value());

  Value::Map m;
  m.emplace("text", Value("to be deleted"));
  repository.apply_writes({RepoWrite::put({"app.bsky.feed.post", "gone"}, Value(m))},
                          signer_for(key));
  REQUIRE(repository.get_record({"app.bsky.feed.post", "gone"}).has_value());
  repository.apply_writes({RepoWrite::del({"app.bsky.feed.post", "gone"})}, signer_for(key));
  // older blocks persist in the store, but the record is gone from the tree
  CHECK_FALSE(repository.get_record({"app.bsky.feed.post", "gone"}).has_value());
  CHECK(store.size() > 0);
}

TEST_CASE("put then delete restores the pre-put MST root") {
  repo::MemoryBlockStore store;
  auto key = test_key(3);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  Value::Map m;
  m.emplace("n", Value(1));
  repository.apply_writes({RepoWrite::put({"com.example.thing", "a"}, Value(m))},
                          signer_for(key));
  Cid before = repository.mst_root();
  repository.apply_writes({RepoWrite::put({"com.example.thing", "b"}, Value(m))},
                          signer_for(key));
  repository.apply_writes({RepoWrite::del({"com.example.thing", "b"})}, signer_for(key));
  CHECK(repository.mst_root() == before);
}

TEST_CASE("deleting an absent path fails atomically") {
  repo::MemoryBlockStore store;
  auto key = test_key(4);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  Value::Map m;
  m.emplace("n", Value(1));
  Cid before = repository.head();
  CHECK_THROWS_AS(
      repository.apply_writes({RepoWrite::put({"com.example.thing", "x"}, Value(m)),
                               RepoWrite::del({"com.example.thing", "absent"})},
                              signer_for(key)),
      RepoError);
  CHECK(repository.head() == before);  // all-or-nothing
  CHECK_FALSE(repository.get_record({"com.example.thing", "x"}).has_value());
}

TEST_CASE("invalid record paths are rejected") {
  repo::MemoryBlockStore store;
  auto key = test_key(5);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  Value::Map m;
  CHECK_THROWS_AS(repository.apply_writes(
                      {RepoWrite::put({"NotLower", "x"}, Value(m))}, signer_for(key)),
                  RepoError);
  CHECK_THROWS_AS(repository.apply_writes(
                      {RepoWrite::put({"app.bsky.feed.post", "bad key!"}, Value(m))},
                      signer_for(key)),
                  RepoError);
  CHECK(RecordPath::valid_rkey("A-Za_z0.9:~"));
  CHECK_FALSE(RecordPath::valid_rkey(""));
  CHECK_FALSE(RecordPath::valid_collection("single"));
}

TEST_CASE("commit signatures verify and tampering breaks them") {
  repo::MemoryBlockStore store;
  auto key = test_key(6);
  auto wrong = test_key(7);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  Value::Map m;
  m.emplace("text", Value("signed"));
  auto result = repository.apply_writes(
      {RepoWrite::put({"app.bsky.feed.post", "sig"}, Value(m))}, signer_for(key));
  CHECK(repo::verify_commit(result.commit, key.public_key));
  CHECK_FALSE(repo::verify_commit(result.commit, wrong.public_key));

  repo::Commit resigned = result.commit;
  resigned.sig = crypto::sign(repo::encode_commit(resigned, false), wrong);
  CHECK_FALSE(repo::verify_commit(resigned, key.public_key));

  repo::Commit tampered = result.commit;
  tampered.data = record_cid(999);  // swap the data cid after signing
  CHECK_FALSE(repo::verify_commit(tampered, key.public_key));
}

TEST_CASE("inclusion and exclusion proofs verify") {
  repo::MemoryBlockStore store;
  auto key = test_key(8);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  std::mt19937_64 rng(42);
  std::vector<std::string> keys;
  for (int i = 0; i < 40; ++i) {
    Value::Map m;
    m.emplace("n", Value(i));
    std::string rkey = testutil::random_rkey(rng);
    if (repository.get_record({"app.bsky.feed.post", rkey})) continue;
    repository.apply_writes({RepoWrite::put({"app.bsky.feed.post", rkey}, Value(m))},
                            signer_for(key));
    keys.push_back("app.bsky.feed.post/" + rkey);
  }
  for (const std::string& k : keys) {
    auto proof = repository.prove(k);
    CHECK(proof.kind == repo::Proof::Kind::Inclusion);
    CHECK(repo::verify_proof(repository.mst_root(), proof));
  }
  auto absent = repository.prove("app.bsky.feed.post/definitely-absent");
  CHECK(absent.kind == repo::Proof::Kind::Exclusion);
  CHECK(repo::verify_proof(repository.mst_root(), absent));
}

TEST_CASE("single byte flips break proofs") {
  repo::MemoryBlockStore store;
  auto key = test_key(9);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  for (int i = 0; i < 8; ++i) {
    Value::Map m;
    m.emplace("n", Value(i));
    repository.apply_writes(
        {RepoWrite::put({"app.bsky.feed.post", "k" + std::to_string(i)}, Value(m))},
        signer_for(key));
  }
  auto proof = repository.prove("app.bsky.feed.post/k3");
  REQUIRE(repo::verify_proof(repository.mst_root(), proof));
  for (size_t block = 0; block < proof.blocks.size(); ++block) {
    for (size_t byte = 0; byte < proof.blocks[block].size(); ++byte) {
      auto fuzzed = proof;
      fuzzed.blocks[block][byte] ^= 0x01;
      CHECK_FALSE(repo::verify_proof(repository.mst_root(), fuzzed));
    }
  }
}

TEST_CASE("a stale inclusion proof fails against a later root") {
  repo::MemoryBlockStore store;
  auto key = test_key(10);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  Value::Map m;
  m.emplace("text", Value("ephemeral"));
  repository.apply_writes({RepoWrite::put({"app.bsky.feed.post", "tmp"}, Value(m))},
                          signer_for(key));
  auto proof = repository.prove("app.bsky.feed.post/tmp");
  Cid old_root = repository.mst_root();
  repository.apply_writes({RepoWrite::del({"app.bsky.feed.post", "tmp"})}, signer_for(key));
  CHECK(repo::verify_proof(old_root, proof));                        // still true historically
  CHECK_FALSE(repo::verify_proof(repository.mst_root(), proof));     // replay rejected
  // and the new root proves the deletion
  auto exclusion = repository.prove("app.bsky.feed.post/tmp");
  CHECK(exclusion.kind == repo::Proof::Kind::Exclusion);
  CHECK(repo::verify_proof(repository.mst_root(), exclusion));
}

TEST_CASE("no exclusion proof verifies for a present key and vice versa") {
  repo::MemoryBlockStore store;
  auto key = test_key(11);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  std::mt19937_64 rng(4242);
  std::vector<std::string> present;
  for (int i = 0; i < 32; ++i) {
    Value::Map m;
    m.emplace("n", Value(i));
    std::string rkey = "r" + std::to_string(i);
    repository.apply_writes({RepoWrite::put({"app.bsky.feed.post", rkey}, Value(m))},
                            signer_for(key));
    present.push_back("app.bsky.feed.post/" + rkey);
  }
  for (const std::string& k : present) {
    auto proof = repository.prove(k);
    auto forged = proof;
    forged.kind = repo::Proof::Kind::Exclusion;
    forged.record.reset();
    CHECK_FALSE(repo::verify_proof(repository.mst_root(), forged));
  }
  auto absent = repository.prove("app.bsky.feed.post/not-there");
  auto forged = absent;
  forged.kind = repo::Proof::Kind::Inclusion;
  CHECK_FALSE(repo::verify_proof(repository.mst_root(), forged));
}

TEST_CASE("diff matches a brute-force enumeration oracle") {
  repo::MemoryBlockStore store;
  auto key = test_key(12);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  std::mt19937_64 rng(31415);
  std::vector<std::string> live;

  auto snapshot = [&]() { return repo::enumerate(store, repository.mst_root()); };
  auto old_map = snapshot();
  Cid old_root = repository.mst_root();

  for (int i = 0; i < 50; ++i) {
    bool del = !live.empty() && rng() % 4 == 0;
    if (del) {
      size_t pick = rng() % live.size();
      auto path = RecordPath::parse(live[pick]);
      repository.apply_writes({RepoWrite::del(*path)}, signer_for(key));
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(pick));
    } else {
      std::string rkey = testutil::random_rkey(rng);
      Value::Map m;
      m.emplace("n", Value(static_cast<std::int64_t>(rng() % 1000)));
      std::string full = "app.bsky.feed.post/" + rkey;
      bool existed = repository.get_record({"app.bsky.feed.post", rkey}).has_value();
      repository.apply_writes({RepoWrite::put({"app.bsky.feed.post", rkey}, Value(m))},
                              signer_for(key));
      if (!existed) live.push_back(full);
    }
  }

  auto new_map = snapshot();
  repo::RepoDiff delta = repo::diff(store, old_root, repository.mst_root());

  // oracle: brute-force set difference of the two enumerations
  std::vector<std::string> want_created, want_deleted, want_updated;
  for (const auto& [k, v] : new_map) {
    auto it = old_map.find(k);
    if (it == old_map.end()) {
      want_created.push_back(k);
    } else if (!(it->second == v)) {
      want_updated.push_back(k);
    }
  }
  for (const auto& [k, v] : old_map) {
    (void)v;
    if (!new_map.count(k)) want_deleted.push_back(k);
  }
  auto keys_of = [](const std::vector<repo::DiffEntry>& entries) {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.key);
    return out;
  };
  CHECK(keys_of(delta.created) == want_created);
  CHECK(keys_of(delta.updated) == want_updated);
  CHECK(keys_of(delta.deleted) == want_deleted);

  CHECK(repo::diff(store, repository.mst_root(), repository.mst_root()).empty());
}

TEST_CASE("one put yields exactly one created entry") {
  repo::MemoryBlockStore store;
  auto key = test_key(13);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  Cid before = repository.mst_root();
  Value::Map m;
  m.emplace("text", Value("solo"));
  repository.apply_writes({RepoWrite::put({"app.bsky.feed.post", "solo"}, Value(m))},
                          signer_for(key));
  auto delta = repo::diff(store, before, repository.mst_root());
  CHECK(delta.created.size() == 1);
  CHECK(delta.updated.empty());
  CHECK(delta.deleted.empty());
  CHECK(delta.created[0].key == "app.bsky.feed.post/solo");
}

TEST_CASE("archive round-trip preserves the root and record set") {
  repo::MemoryBlockStore store;
  auto key = test_key(14);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  std::mt19937_64 rng(8);
  for (int i = 0; i < 60; ++i) {
    Value::Map m;
    m.emplace("n", Value(i));
    repository.apply_writes(
        {RepoWrite::put({"app.bsky.feed.post", testutil::random_rkey(rng)}, Value(m))},
        signer_for(key));
  }
  Bytes archive = repository.export_archive();

  repo::MemoryBlockStore other;
  auto imported = repo::import_archive(archive, other);
  CHECK(imported.root == repository.head());
  Repository restored = Repository::open(other, imported.root);
  auto original = repository.list_records();
  auto recovered = restored.list_records();
  REQUIRE(original.size() == recovered.size());
  for (size_t i = 0; i < original.size(); ++i) {
    CHECK(original[i].key == recovered[i].key);
    CHECK(original[i].value == recovered[i].value);
  }
  // export is deterministic
  CHECK(restored.export_archive() == archive);
}

TEST_CASE("corrupted archive blocks are named by cid") {
  repo::MemoryBlockStore store;
  auto key = test_key(15);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  Value::Map m;
  m.emplace("text", Value("payload"));
  repository.apply_writes({RepoWrite::put({"app.bsky.feed.post", "p"}, Value(m))},
                          signer_for(key));
  Bytes archive = repository.export_archive();
  // flip one byte in the last block's payload
  Bytes corrupted = archive;
  corrupted[corrupted.size() - 1] ^= 0x40;
  repo::MemoryBlockStore other;
  try {
    repo::import_archive(corrupted, other);
    FAIL("should have thrown");
  } catch (const RepoError& e) {
    CHECK(e.kind() == RepoErrorKind::HashMismatch);
    CHECK(std::string(e.what()).find("b") != std::string::npos);  // names the cid
  }
}

TEST_CASE("archive missing a referenced block is corrupt") {
  repo::MemoryBlockStore store;
  auto key = test_key(16);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  Value::Map m;
  m.emplace("text", Value("payload"));
  repository.apply_writes({RepoWrite::put({"app.bsky.feed.post", "p"}, Value(m))},
                          signer_for(key));
  Bytes archive = repository.export_archive();

  // drop the final frame entirely
  size_t pos = 0;
  auto header_len = atproto::get_uvarint(archive, pos);
  pos += *header_len;
  size_t last_frame_start = pos;
  while (pos < archive.size()) {
    last_frame_start = pos;
    size_t probe = pos;
    auto len = atproto::get_uvarint(archive, probe);
    pos = probe + *len;
  }
  Bytes truncated(archive.begin(), archive.begin() + static_cast<std::ptrdiff_t>(last_frame_start));
  repo::MemoryBlockStore other;
  try {
    repo::import_archive(truncated, other);
    FAIL("should have thrown");
  } catch (const RepoError& e) {
    CHECK(e.kind() == RepoErrorKind::CorruptArchive);
  }
}

TEST_CASE("history chains and replaying diffs reproduces the record set") {
  repo::MemoryBlockStore store;
  auto key = test_key(17);
  Repository repository = Repository::create(store, "did:plc:aaaaaaaaaaaaaaaaaaaaaaaa",
                                             signer_for(key));
  std::vector<Cid> heads{repository.head()};
  std::mt19937_64 rng(99);
  for (int i = 0; i < 20; ++i) {
    Value::Map m;
    m.emplace("n", Value(i));
    repository.apply_writes(
        {RepoWrite::put({"app.bsky.feed.post", "h" + std::to_string(i)}, Value(m))},
        signer_for(key));
    heads.push_back(repository.head());
  }
  // commits link via prev
  for (size_t i = 1; i < heads.size(); ++i) {
    auto commit = repo::parse_commit(*store.get(heads[i]));
    REQUIRE(commit.has_value());
    REQUIRE(commit->prev.has_value());
    CHECK(*commit->prev == heads[i - 1]);
  }
  // replay all diffs from genesis
  std::map<std::string, Cid> replayed;
  for (size_t i = 1; i < heads.size(); ++i) {
    auto old_commit = repo::parse_commit(*store.get(heads[i - 1]));
    auto new_commit = repo::parse_commit(*store.get(heads[i]));
    auto delta = repo::diff(store, old_commit->data, new_commit->data);
    for (const auto& e : delta.created) replayed[e.key] = *e.new_cid;
    for (const auto& e : delta.updated) replayed[e.key] = *e.new_cid;
    for (const auto& e : delta.deleted) replayed.erase(e.key);
  }
  auto current = repo::enumerate(store, repository.mst_root());
  CHECK(replayed == current);
}

}  // TEST_SUITE
