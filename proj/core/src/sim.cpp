#include "atproto/sim.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace atproto::sim {

using codec::Cid;
using codec::CidLink;
using codec::Value;

namespace {

// In-process transport with fault flags; unreachability models kill and
// partition actions.
class LocalPdsClient : public relay::PdsClient {
 public:
  LocalPdsClient(Simulation* sim, int index, std::string url)
      : sim_(sim), index_(index), url_(std::move(url)) {}

  std::string url() const override { return url_; }

  bool reachable() const override { return sim_->pds_alive_and_connected(index_); }

  std::optional<std::vector<std::pair<std::string, Cid>>> list_repos() override {
    if (!reachable()) return std::nullopt;
    return sim_->pds(index_).sync_list_repos();
  }

  std::optional<Bytes> fetch_repo(const std::string& did) override {
    if (!reachable()) return std::nullopt;
    auto archive = sim_->pds(index_).sync_get_repo(did);
    if (!archive.ok()) return std::nullopt;
    return archive.value();
  }

  Pull pull_events(std::uint64_t cursor, size_t max) override {
    Pull out;
    if (!reachable()) {
      out.status = Pull::Status::Unreachable;
      return out;
    }
    auto read = sim_->pds(index_).event_log().read_after(cursor, max);
    using Status = events::EventLog<events::RepoEvent>::ReadResult::Status;
    if (read.status == Status::TooOld) {
      out.status = Pull::Status::TooOld;
      return out;
    }
    if (read.status == Status::FutureCursor) {
      out.status = Pull::Status::Ok;  // nothing to pull yet
      return out;
    }
    out.events = std::move(read.events);
    return out;
  }

  std::uint64_t head_seq() override { return sim_->pds(index_).event_log().head_seq(); }

 private:
  Simulation* sim_;
  int index_;
  std::string url_;
};

}  // namespace

}  // namespace atproto::sim

// Simulation needs to hand LocalPdsClient a liveness view; declared here to
// keep the client above self-contained.
namespace atproto::sim {

Bytes Simulation::entropy(size_t n) {
  Bytes out(n);
  for (size_t i = 0; i < n; ++i) {
    out[i] = static_cast<std::uint8_t>(rng_());
  }
  return out;
}

Simulation::Simulation(SimConfig config)
    : cfg_(config), rng_(config.seed), directory_client_(directory_) {
  for (int i = 0; i < cfg_.topology.pdses; ++i) {
    pds::PdsConfig pc;
    pc.url = "https://pds" + std::to_string(i + 1) + ".test";
    pc.handle_domain = "pds" + std::to_string(i + 1) + ".test";
    pc.event_retention = cfg_.pds_retention;
    pc.password_profile = cfg_.password_profile;
    PdsSlot slot;
    slot.service = std::make_unique<pds::Pds>(pc, clock_, directory_, net_,
                                              [this](size_t n) { return entropy(n); });
    pdses_.push_back(std::move(slot));
  }
  for (int i = 0; i < cfg_.topology.relays; ++i) {
    relay::RelayConfig rc;
    rc.firehose_retention = cfg_.firehose_retention;
    relays_.push_back(std::make_unique<relay::Relay>(rc, clock_, net_, directory_client_));
    for (int p = 0; p < cfg_.topology.pdses; ++p) {
      relays_.back()->register_pds(std::make_shared<LocalPdsClient>(
          this, p, pdses_[static_cast<size_t>(p)].service->config().url));
    }
  }

  appview::AppViewConfig ac;
  appview_ = std::make_unique<appview::AppView>(ac, clock_, net_, directory_client_);
  appview_sub_ = std::make_unique<events::Subscription<relay::FirehoseEvent>>(
      relay(0).firehose_subscribe(0).value());

  for (int i = 0; i < cfg_.topology.labelers; ++i) {
    auto [did, key] = make_service_identity("labeler" + std::to_string(i + 1) + ".svc.test");
    labelers_.push_back(std::make_unique<feeds::Labeler>(did, key, clock_));
    labeler_subs_.push_back(std::make_unique<events::Subscription<relay::FirehoseEvent>>(
        relay(0).firehose_subscribe(0).value()));
    label_subs_.push_back(std::make_unique<events::Subscription<labels::Label>>(
        labelers_.back()->subscribe(0).value()));
  }
  for (int i = 0; i < cfg_.topology.feedgens; ++i) {
    auto [did, key] = make_service_identity("feedgen" + std::to_string(i + 1) + ".svc.test");
    (void)key;  // feed generators serve unsigned skeletons
    feedgens_.push_back(std::make_unique<feeds::FeedGenerator>(did));
    feedgen_subs_.push_back(std::make_unique<events::Subscription<relay::FirehoseEvent>>(
        relay(0).firehose_subscribe(0).value()));
  }

  appview_->set_skeleton_fetcher(
      [this](const std::string& feed_uri, const std::optional<std::string>& cursor,
             size_t limit, const std::string& viewer) -> Outcome<appview::SkeletonPage> {
        (void)viewer;
        if (feedgen_unavailable_) {
          return Outcome<appview::SkeletonPage>::failure("timeout");
        }
        for (auto& fg : feedgens_) {
          auto skeleton = fg->get_skeleton(feed_uri, cursor, limit);
          if (!skeleton.ok()) continue;
          appview::SkeletonPage page;
          page.post_uris = skeleton.value().post_uris;
          page.cursor = skeleton.value().cursor;
          return Outcome<appview::SkeletonPage>::success(std::move(page));
        }
        return Outcome<appview::SkeletonPage>::failure("unknown-feed");
      });
  appview_->set_blob_fetcher(
      [this](const std::string& did, const Cid& cid) -> std::optional<Bytes> {
        auto parsed = identity::Did::parse(did);
        if (!parsed) return std::nullopt;
        auto env = resolver_env();
        auto doc = identity::resolve_did(*parsed, env);
        if (!doc.ok()) return std::nullopt;
        int index = pds_index_by_url(doc.document->pds_url);
        if (index < 0 || !pds_alive_and_connected(index)) return std::nullopt;
        auto blob = pds(index).get_blob(did, cid);
        if (!blob.ok()) return std::nullopt;
        return blob.value();
      });
}

identity::ResolverEnv Simulation::resolver_env() {
  return identity::ResolverEnv{net_, directory_client_, clock_};
}

std::pair<std::string, crypto::KeyPair> Simulation::make_service_identity(
    const std::string& handle) {
  crypto::KeyPair rotation = crypto::keypair_from_seed(entropy(32));
  crypto::KeyPair signing = crypto::keypair_from_seed(entropy(32));
  identity::PlcOperation genesis;
  genesis.handle = handle;
  genesis.pds_url = "https://" + handle;
  genesis.signing_key = crypto::encode_public_key(signing.public_key);
  genesis.rotation_keys = {crypto::encode_public_key(rotation.public_key)};
  genesis.sig = crypto::sign(genesis.encode(false), rotation);
  std::string did = identity::plc_derive_did(genesis);
  directory_.submit_operation(did, genesis);
  net_.publish_handle(handle, did);
  return {did, signing};
}

int Simulation::pds_index_by_url(const std::string& url) const {
  for (size_t i = 0; i < pdses_.size(); ++i) {
    if (pdses_[i].service->config().url == url) return static_cast<int>(i);
  }
  return -1;
}

void Simulation::kill_pds(int index) { pdses_.at(static_cast<size_t>(index)).alive = false; }
void Simulation::restore_pds(int index) { pdses_.at(static_cast<size_t>(index)).alive = true; }
void Simulation::partition_pds(int index) {
  pdses_.at(static_cast<size_t>(index)).partitioned = true;
}
void Simulation::heal_pds(int index) {
  pdses_.at(static_cast<size_t>(index)).partitioned = false;
}

void Simulation::settle() {
  bool progress = true;
  while (progress) {
    progress = false;
    for (auto& r : relays_) {
      if (r->pump()) progress = true;
    }
    if (appview_->pump(*appview_sub_) > 0) progress = true;
    for (size_t i = 0; i < labelers_.size(); ++i) {
      if (labelers_[i]->pump(*labeler_subs_[i]) > 0) progress = true;
    }
    for (size_t i = 0; i < feedgens_.size(); ++i) {
      if (feedgens_[i]->pump(*feedgen_subs_[i]) > 0) progress = true;
    }
    for (auto& sub : label_subs_) {
      if (appview_->pump_labels(*sub) > 0) progress = true;
    }
  }
}

void Simulation::tick(std::int64_t micros) {
  clock_.advance_micros(micros);
  appview_->on_tick();
  settle();
}

}  // namespace atproto::sim

// --- scenario machinery ----------------------------------------------------

namespace atproto::sim {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  Scenario scenario;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments and whitespace
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    size_t begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    size_t end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);

    // tokenize: verb then key=value pairs; values may be double-quoted
    std::vector<std::string> tokens;
    std::string token;
    bool quoted = false;
    for (char c : line) {
      if (quoted) {
        if (c == '"') {
          quoted = false;
        } else {
          token.push_back(c);
        }
        continue;
      }
      if (c == '"') {
        quoted = true;
        continue;
      }
      if (c == ' ' || c == '\t') {
        if (!token.empty()) {
          tokens.push_back(token);
          token.clear();
        }
        continue;
      }
      token.push_back(c);
    }
    if (quoted) throw ScenarioParseError(lineno, "unterminated quote");
    if (!token.empty()) tokens.push_back(token);
    if (tokens.empty()) continue;

    ScenarioAction action;
    action.verb = tokens[0];
    action.line = lineno;
    for (size_t i = 1; i < tokens.size(); ++i) {
      size_t eq = tokens[i].find('=');
      if (eq == std::string::npos) {
        throw ScenarioParseError(lineno, "expected key=value, got '" + tokens[i] + "'");
      }
      action.args[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
    }

    if (action.verb == "topology") {
      for (const auto& [key, value] : action.args) {
        int n = 0;
        try {
          n = std::stoi(value);
        } catch (const std::exception&) {
          throw ScenarioParseError(lineno, "bad count for " + key);
        }
        if (key == "pdses") {
          scenario.topology.pdses = n;
        } else if (key == "relays") {
          scenario.topology.relays = n;
        } else if (key == "labelers") {
          scenario.topology.labelers = n;
        } else if (key == "feedgens") {
          scenario.topology.feedgens = n;
        } else {
          throw ScenarioParseError(lineno, "unknown topology key " + key);
        }
      }
      continue;
    }
    if (action.verb == "seed") {
      if (auto it = action.args.find("value"); it != action.args.end()) {
        scenario.seed = std::stoull(it->second);
      } else {
        throw ScenarioParseError(lineno, "seed needs value=<n>");
      }
      continue;
    }
    scenario.actions.push_back(std::move(action));
  }
  return scenario;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError(0, "cannot open scenario file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str());
}

namespace {

struct AccountState {
  std::string did;
  std::string handle;
  std::string password;
  std::string token;
  int pds = 0;
};

class ScenarioRunner {
 public:
  ScenarioRunner(const Scenario& scenario, std::uint64_t seed)
      : scenario_(scenario), sim_(make_config(scenario, seed)) {
    out_ << "seed: " << seed << "\n";
  }

  ScenarioReport run() {
    for (const ScenarioAction& action : scenario_.actions) {
      try {
        // distinct timestamps keep timeline order unambiguous
        sim_.clock().advance_micros(1'000'000);
        dispatch(action);
      } catch (const std::exception& e) {
        fail(action, e.what());
      }
    }
    out_ << "assertions: " << report_.assertions << " failed: " << report_.failures << "\n";
    out_ << "metrics:\n";
    for (const auto& [key, value] : sim_.relay(0).metrics()) {
      out_ << "  relay." << key << ": " << value << "\n";
    }
    out_ << "  appview.events: " << sim_.appview().events_applied() << "\n";
    out_ << "result: " << (report_.failures == 0 ? "PASS" : "FAIL") << "\n";
    report_.passed = report_.failures == 0;
    report_.text = out_.str();
    return report_;
  }

 private:
  static SimConfig make_config(const Scenario& scenario, std::uint64_t seed) {
    SimConfig config;
    config.topology = scenario.topology;
    config.seed = seed;
    return config;
  }

  [[noreturn]] void bail(const ScenarioAction& action, const std::string& what) {
    throw std::runtime_error(action.verb + ": " + what);
  }

  const std::string& arg(const ScenarioAction& action, const std::string& key) {
    auto it = action.args.find(key);
    if (it == action.args.end()) bail(action, "missing argument " + key);
    return it->second;
  }

  std::string arg_or(const ScenarioAction& action, const std::string& key,
                     const std::string& fallback) {
    auto it = action.args.find(key);
    return it == action.args.end() ? fallback : it->second;
  }

  int int_arg(const ScenarioAction& action, const std::string& key) {
    return std::stoi(arg(action, key));
  }

  AccountState& account(const ScenarioAction& action, const std::string& name) {
    auto it = accounts_.find(name);
    if (it == accounts_.end()) bail(action, "unknown account " + name);
    return it->second;
  }

  std::string ref(const ScenarioAction& action, const std::string& id) {
    auto it = refs_.find(id);
    if (it == refs_.end()) bail(action, "unknown ref " + id);
    return it->second;
  }

  std::string fresh_token(const ScenarioAction& action, AccountState& acct) {
    auto session = sim_.pds(acct.pds).create_session(acct.handle, acct.password);
    if (!session.ok()) bail(action, "login failed: " + session.error());
    acct.token = session.value().token;
    return acct.token;
  }

  pds::WriteResult write_one(const ScenarioAction& action, AccountState& acct,
                             pds::WriteRequest request) {
    auto result = sim_.pds(acct.pds).write_records(acct.token, {std::move(request)});
    if (!result.ok() && result.error() == "unauthorized") {
      fresh_token(action, acct);
      result = sim_.pds(acct.pds).write_records(acct.token, {request});
    }
    if (!result.ok()) bail(action, result.error() + " " + result.detail());
    sim_.settle();
    return result.value();
  }

  Value strong_ref(const std::string& uri) {
    auto parsed = lexicon::AtUri::parse(uri);
    auto& acct_pds = sim_.pds(pds_of_did(parsed->did));
    auto record = acct_pds.repository(parsed->did)->get_record(
        {parsed->collection, parsed->rkey});
    Value::Map m;
    m.emplace("uri", Value(uri));
    m.emplace("cid", Value(CidLink{record->second}));
    return Value(std::move(m));
  }

  int pds_of_did(const std::string& did) {
    for (const auto& [name, acct] : accounts_) {
      if (acct.did == did) return acct.pds;
    }
    return 0;
  }

  void remember(const std::map<std::string, std::string>& args, const std::string& key,
                const std::string& uri) {
    auto it = args.find(key);
    if (it != args.end()) refs_[it->second] = uri;
  }

  void check(const ScenarioAction& action, bool ok, const std::string& detail) {
    ++report_.assertions;
    std::ostringstream line;
    line << (ok ? "ok " : "FAIL ") << action.line << " " << action.verb;
    for (const auto& [key, value] : action.args) line << " " << key << "=" << value;
    if (!ok) {
      ++report_.failures;
      line << " :: " << detail;
    }
    out_ << line.str() << "\n";
  }

  void fail(const ScenarioAction& action, const std::string& what) {
    ++report_.assertions;
    ++report_.failures;
    out_ << "FAIL " << action.line << " " << action.verb << " :: " << what << "\n";
  }

  ViewerContext viewer_ctx(const std::string& name) {
    if (name.empty() || name == "anonymous") return ViewerContext{};
    auto it = accounts_.find(name);
    if (it == accounts_.end()) return ViewerContext{};
    return sim_.pds(it->second.pds).viewer_context_for_did(it->second.did);
  }

  void dispatch(const ScenarioAction& action);
  void do_create_account(const ScenarioAction& action);
  void do_post(const ScenarioAction& action);
  void do_migrate(const ScenarioAction& action);
  void do_restore_account(const ScenarioAction& action);
  void do_assert_oracle(const ScenarioAction& action);

  const Scenario& scenario_;
  Simulation sim_;
  std::map<std::string, AccountState> accounts_;
  std::map<std::string, std::string> refs_;  // id -> at-uri
  std::map<std::string, pds::AccountExport> backups_;
  std::map<std::string, std::string> feed_uris_;  // id -> feed uri
  std::set<std::string> takedowns_;
  std::ostringstream out_;
  ScenarioReport report_;
};

void ScenarioRunner::do_create_account(const ScenarioAction& action) {
  std::string name = arg(action, "name");
  int pds_index = int_arg(action, "pds") - 1;
  std::string handle = arg_or(action, "handle",
                              name + ".pds" + std::to_string(pds_index + 1) + ".test");
  std::string password = arg_or(action, "password", "pw-" + name);
  auto& host = sim_.pds(pds_index);
  auto did = host.create_account(handle, password);
  if (!did.ok()) bail(action, did.error());
  AccountState acct;
  acct.did = did.value();
  acct.handle = handle;
  acct.password = password;
  acct.pds = pds_index;
  accounts_[name] = acct;
  fresh_token(action, accounts_[name]);
  if (action.args.count("own-domain")) {
    // caller-owned domain: the scenario seeds the forward link itself
    sim_.net().publish_handle(handle, did.value());
  }
  sim_.settle();
}

void ScenarioRunner::do_post(const ScenarioAction& action) {
  AccountState& acct = account(action, arg(action, "as"));
  Value::Map record;
  record.emplace("$type", Value(lexicon::kPost));
  record.emplace("text", Value(arg(action, "text")));
  record.emplace("createdAt", Value(sim_.clock().now_micros()));
  if (auto it = action.args.find("reply-to"); it != action.args.end()) {
    std::string parent_uri = ref(action, it->second);
    auto parent_parsed = lexicon::AtUri::parse(parent_uri);
    if (!parent_parsed) bail(action, "bad parent uri");
    // root of the parent, or the parent itself when it is a top post
    std::string root_uri = parent_uri;
    auto& parent_pds = sim_.pds(pds_of_did(parent_parsed->did));
    auto parent_record =
        parent_pds.repository(parent_parsed->did)
            ->get_record({parent_parsed->collection, parent_parsed->rkey});
    if (parent_record) {
      const Value* reply = parent_record->first.at("reply");
      if (reply && reply->is_map()) {
        const Value* root = reply->at("root");
        if (root && root->is_map() && root->at("uri") && root->at("uri")->is_string()) {
          root_uri = root->at("uri")->as_string();
        }
      }
    }
    Value::Map reply;
    reply.emplace("root", strong_ref(root_uri));
    reply.emplace("parent", strong_ref(parent_uri));
    record.emplace("reply", Value(std::move(reply)));
  }
  if (auto it = action.args.find("mentions"); it != action.args.end()) {
    Value::Array mentions;
    for (const std::string& name : split_list(it->second)) {
      mentions.push_back(Value(account(action, name).did));
    }
    record.emplace("mentions", Value(std::move(mentions)));
  }
  if (auto it = action.args.find("images"); it != action.args.end()) {
    int count = std::stoi(it->second);
    Value::Array images;
    for (int i = 0; i < count; ++i) {
      auto blob = sim_.pds(acct.pds).put_blob(acct.token, sim_.entropy(64));
      if (!blob.ok()) bail(action, "blob: " + blob.error());
      images.push_back(Value(CidLink{blob.value()}));
    }
    Value::Map embed;
    embed.emplace("images", Value(std::move(images)));
    record.emplace("embed", Value(std::move(embed)));
  }
  pds::WriteRequest request;
  request.action = pds::WriteRequest::Action::Create;
  request.collection = lexicon::kPost;
  request.record = Value(std::move(record));
  auto result = write_one(action, acct, std::move(request));
  remember(action.args, "id", "at://" + acct.did + "/" + result.paths.front());
}

void ScenarioRunner::do_migrate(const ScenarioAction& action) {
  AccountState& acct = account(action, arg(action, "who"));
  int target = int_arg(action, "to") - 1;
  auto& old_host = sim_.pds(acct.pds);
  auto kit = old_host.export_account(acct.token);
  if (!kit.ok()) {
    fresh_token(action, acct);
    kit = old_host.export_account(acct.token);
  }
  if (!kit.ok()) bail(action, "export: " + kit.error());

  auto& new_host = sim_.pds(target);
  auto prepared = new_host.prepare_migration(acct.did, acct.handle, acct.password);
  if (!prepared.ok()) bail(action, "prepare: " + prepared.error());

  auto log = sim_.directory().get_audit_log(acct.did);
  if (!log || log->empty()) bail(action, "directory lost the did");
  auto secret = crypto::decode_secret_key(kit.value().rotation_secret);
  if (!secret) bail(action, "rotation secret corrupt");
  identity::PlcOperation update = pds::make_signed_operation(
      log->back().cid(), acct.handle, new_host.config().url, prepared.value(),
      log->back().rotation_keys, *secret);

  auto moved = new_host.migrate_in(acct.did, kit.value().archive, kit.value().blobs, update,
                                   kit.value().rotation_secret);
  if (!moved.ok()) bail(action, "migrate_in: " + moved.error() + " " + moved.detail());
  old_host.deactivate_account(acct.did);
  acct.pds = target;
  fresh_token(action, acct);
  sim_.settle();
}

void ScenarioRunner::do_restore_account(const ScenarioAction& action) {
  std::string who = arg(action, "who");
  AccountState& acct = account(action, who);
  auto backup = backups_.find(who);
  if (backup == backups_.end()) bail(action, "no backup recorded for " + who);
  int target = int_arg(action, "to") - 1;

  auto& new_host = sim_.pds(target);
  auto prepared = new_host.prepare_migration(acct.did, acct.handle, acct.password);
  if (!prepared.ok()) bail(action, "prepare: " + prepared.error());

  auto log = sim_.directory().get_audit_log(acct.did);
  if (!log || log->empty()) bail(action, "directory lost the did");
  auto secret = crypto::decode_secret_key(backup->second.rotation_secret);
  if (!secret) bail(action, "rotation secret corrupt");
  identity::PlcOperation update = pds::make_signed_operation(
      log->back().cid(), acct.handle, new_host.config().url, prepared.value(),
      log->back().rotation_keys, *secret);

  auto moved = new_host.migrate_in(acct.did, backup->second.archive, backup->second.blobs,
                                   update, backup->second.rotation_secret);
  if (!moved.ok()) bail(action, "migrate_in: " + moved.error() + " " + moved.detail());
  acct.pds = target;
  fresh_token(action, acct);
  sim_.settle();
}

void ScenarioRunner::do_assert_oracle(const ScenarioAction& action) {
  std::vector<Bytes> archives;
  for (const auto& [name, acct] : accounts_) {
    (void)name;
    if (!sim_.pds_alive(acct.pds)) continue;
    auto archive = sim_.pds(acct.pds).sync_get_repo(acct.did);
    if (archive.ok()) archives.push_back(archive.value());
  }
  std::vector<labels::Label> label_stream;
  for (int i = 0; i < sim_.labeler_count(); ++i) {
    auto read = sim_.labeler(i).log().read_after(0, 100000);
    for (const labels::Label& label : read.events) label_stream.push_back(label);
  }
  audit::ReferenceViews reference(archives, takedowns_, label_stream);

  std::map<std::string, ViewerContext> viewers;
  if (auto it = action.args.find("viewers"); it != action.args.end()) {
    for (const std::string& name : split_list(it->second)) {
      viewers[account(action, name).did] = viewer_ctx(name);
    }
  } else {
    for (const auto& [name, acct] : accounts_) {
      viewers[acct.did] = viewer_ctx(name);
    }
  }
  audit::AuditReport audit = audit::audit_appview(sim_.appview(), reference, viewers);
  std::string detail;
  for (size_t i = 0; i < audit.mismatches.size() && i < 5; ++i) {
    detail += audit.mismatches[i] + "; ";
  }
  check(action, audit.ok, detail);
}

void ScenarioRunner::dispatch(const ScenarioAction& action) {
  const std::string& verb = action.verb;
  if (verb == "create-account") {
    do_create_account(action);
  } else if (verb == "post") {
    do_post(action);
  } else if (verb == "reply") {
    ScenarioAction copy = action;
    copy.args["reply-to"] = arg(action, "to");
    copy.args.erase("to");
    do_post(copy);
  } else if (verb == "like" || verb == "repost") {
    AccountState& acct = account(action, arg(action, "as"));
    std::string subject = ref(action, arg(action, "post"));
    Value::Map record;
    record.emplace("$type", Value(verb == "like" ? lexicon::kLike : lexicon::kRepost));
    record.emplace("subject", strong_ref(subject));
    record.emplace("createdAt", Value(sim_.clock().now_micros()));
    pds::WriteRequest request;
    request.action = pds::WriteRequest::Action::Create;
    request.collection = verb == "like" ? lexicon::kLike : lexicon::kRepost;
    request.record = Value(std::move(record));
    auto result = write_one(action, acct, std::move(request));
    std::string uri = "at://" + acct.did + "/" + result.paths.front();
    remember(action.args, "id", uri);
    refs_[verb + ":" + arg(action, "as") + ":" + arg(action, "post")] = uri;
  } else if (verb == "unlike") {
    AccountState& acct = account(action, arg(action, "as"));
    std::string uri = ref(action, "like:" + arg(action, "as") + ":" + arg(action, "post"));
    auto parsed = lexicon::AtUri::parse(uri);
    pds::WriteRequest request;
    request.action = pds::WriteRequest::Action::Delete;
    request.collection = parsed->collection;
    request.rkey = parsed->rkey;
    write_one(action, acct, std::move(request));
  } else if (verb == "follow" || verb == "block") {
    AccountState& acct = account(action, arg(action, "as"));
    AccountState& subject = account(action, arg(action, "of"));
    Value::Map record;
    record.emplace("$type", Value(verb == "follow" ? lexicon::kFollow : lexicon::kBlock));
    record.emplace("subject", Value(subject.did));
    record.emplace("createdAt", Value(sim_.clock().now_micros()));
    pds::WriteRequest request;
    request.action = pds::WriteRequest::Action::Create;
    request.collection = verb == "follow" ? lexicon::kFollow : lexicon::kBlock;
    request.record = Value(std::move(record));
    auto result = write_one(action, acct, std::move(request));
    std::string uri = "at://" + acct.did + "/" + result.paths.front();
    remember(action.args, "id", uri);
    refs_[verb + ":" + arg(action, "as") + ":" + arg(action, "of")] = uri;
  } else if (verb == "unfollow" || verb == "unblock") {
    std::string kind = verb.substr(2);
    AccountState& acct = account(action, arg(action, "as"));
    std::string uri = ref(action, kind + ":" + arg(action, "as") + ":" + arg(action, "of"));
    auto parsed = lexicon::AtUri::parse(uri);
    pds::WriteRequest request;
    request.action = pds::WriteRequest::Action::Delete;
    request.collection = parsed->collection;
    request.rkey = parsed->rkey;
    write_one(action, acct, std::move(request));
  } else if (verb == "delete") {
    AccountState& acct = account(action, arg(action, "as"));
    std::string uri = ref(action, arg(action, "ref"));
    auto parsed = lexicon::AtUri::parse(uri);
    pds::WriteRequest request;
    request.action = pds::WriteRequest::Action::Delete;
    request.collection = parsed->collection;
    request.rkey = parsed->rkey;
    write_one(action, acct, std::move(request));
  } else if (verb == "threadgate") {
    AccountState& acct = account(action, arg(action, "as"));
    std::string post_uri = ref(action, arg(action, "post"));
    auto parsed = lexicon::AtUri::parse(post_uri);
    Value::Map record;
    record.emplace("$type", Value(lexicon::kThreadgate));
    record.emplace("post", strong_ref(post_uri));
    Value::Array allow;
    for (const std::string& rule : split_list(arg(action, "allow"))) {
      if (rule.starts_with("list=")) {
        allow.push_back(Value("list/" + ref(action, rule.substr(5))));
      } else {
        allow.push_back(Value(rule));
      }
    }
    record.emplace("allow", Value(std::move(allow)));
    pds::WriteRequest request;
    request.action = pds::WriteRequest::Action::Create;
    request.collection = lexicon::kThreadgate;
    request.rkey = parsed->rkey;  // gate shares the post rkey
    request.record = Value(std::move(record));
    write_one(action, acct, std::move(request));
  } else if (verb == "list-create") {
    AccountState& acct = account(action, arg(action, "as"));
    Value::Map record;
    record.emplace("$type", Value(lexicon::kList));
    record.emplace("name", Value(arg(action, "name")));
    record.emplace("purpose", Value(arg_or(action, "purpose", "curatelist")));
    pds::WriteRequest request;
    request.action = pds::WriteRequest::Action::Create;
    request.collection = lexicon::kList;
    request.record = Value(std::move(record));
    auto result = write_one(action, acct, std::move(request));
    remember(action.args, "id", "at://" + acct.did + "/" + result.paths.front());
  } else if (verb == "list-add") {
    AccountState& acct = account(action, arg(action, "as"));
    AccountState& member = account(action, arg(action, "member"));
    Value::Map record;
    record.emplace("$type", Value(lexicon::kListItem));
    record.emplace("list", Value(ref(action, arg(action, "list"))));
    record.emplace("subject", Value(member.did));
    pds::WriteRequest request;
    request.action = pds::WriteRequest::Action::Create;
    request.collection = lexicon::kListItem;
    request.record = Value(std::move(record));
    write_one(action, acct, std::move(request));
  } else if (verb == "profile") {
    AccountState& acct = account(action, arg(action, "as"));
    Value::Map record;
    record.emplace("$type", Value(lexicon::kProfile));
    record.emplace("displayName", Value(arg_or(action, "name", "")));
    record.emplace("description", Value(arg_or(action, "desc", "")));
    pds::WriteRequest request;
    request.action = pds::WriteRequest::Action::Create;
    request.collection = lexicon::kProfile;
    request.rkey = "self";
    request.record = Value(std::move(record));
    write_one(action, acct, std::move(request));
  } else if (verb == "widget") {
    AccountState& acct = account(action, arg(action, "as"));
    Value::Map record;
    record.emplace("$type", Value("com.example.widget"));
    record.emplace("n", Value(static_cast<std::int64_t>(std::stoll(arg_or(action, "n", "1")))));
    pds::WriteRequest request;
    request.action = pds::WriteRequest::Action::Create;
    request.collection = "com.example.widget";
    request.record = Value(std::move(record));
    auto result = write_one(action, acct, std::move(request));
    remember(action.args, "id", "at://" + acct.did + "/" + result.paths.front());
  } else if (verb == "mute" || verb == "unmute") {
    AccountState& acct = account(action, arg(action, "as"));
    std::string subject;
    if (auto it = action.args.find("of"); it != action.args.end()) {
      subject = account(action, it->second).did;
    } else {
      subject = ref(action, arg(action, "thread"));
    }
    auto result = sim_.pds(acct.pds).set_mute(acct.token, subject, verb == "mute");
    if (!result.ok()) {
      fresh_token(action, acct);
      result = sim_.pds(acct.pds).set_mute(acct.token, subject, verb == "mute");
    }
    if (!result.ok()) bail(action, result.error());
  } else if (verb == "label-pref") {
    AccountState& acct = account(action, arg(action, "viewer"));
    auto result = sim_.pds(acct.pds).set_label_pref(acct.token, arg(action, "value"),
                                                    arg(action, "pref"));
    if (!result.ok()) bail(action, result.error());
  } else if (verb == "subscribe-labeler") {
    AccountState& acct = account(action, arg(action, "viewer"));
    int index = int_arg(action, "labeler") - 1;
    auto result = sim_.pds(acct.pds).set_labeler_subscription(
        acct.token, sim_.labeler(index).did(), true);
    if (!result.ok()) bail(action, result.error());
  } else if (verb == "label-rule") {
    int index = int_arg(action, "labeler") - 1;
    feeds::LabelRule rule;
    rule.value = arg(action, "value");
    rule.substring = arg_or(action, "match", "");
    rule.collection = arg_or(action, "collection", lexicon::kPost);
    for (const std::string& name : split_list(arg_or(action, "authors", ""))) {
      rule.authors.insert(account(action, name).did);
    }
    sim_.labeler(index).add_rule(std::move(rule));
  } else if (verb == "feed-create") {
    int index = int_arg(action, "feedgen") - 1;
    feeds::FeedRule rule;
    rule.hashtag = arg_or(action, "hashtag", "");
    for (const std::string& name : split_list(arg_or(action, "authors", ""))) {
      rule.authors.insert(account(action, name).did);
    }
    std::string rkey = arg_or(action, "rkey", arg(action, "id"));
    feed_uris_[arg(action, "id")] = sim_.feedgen(index).register_feed(rkey, std::move(rule));
  } else if (verb == "takedown" || verb == "untakedown") {
    std::string subject = arg(action, "subject");
    std::string target;
    if (subject.starts_with("@")) {
      target = account(action, subject.substr(1)).did;
    } else {
      target = ref(action, subject);
    }
    sim_.appview().admin_takedown("operator", target, verb == "takedown");
    if (verb == "takedown") {
      takedowns_.insert(target);
    } else {
      takedowns_.erase(target);
    }
  } else if (verb == "migrate") {
    do_migrate(action);
  } else if (verb == "backup") {
    std::string who = arg(action, "who");
    AccountState& acct = account(action, who);
    auto kit = sim_.pds(acct.pds).export_account(acct.token);
    if (!kit.ok()) {
      fresh_token(action, acct);
      kit = sim_.pds(acct.pds).export_account(acct.token);
    }
    if (!kit.ok()) bail(action, kit.error());
    backups_[who] = kit.value();
  } else if (verb == "restore-account") {
    do_restore_account(action);
  } else if (verb == "kill-pds") {
    sim_.kill_pds(int_arg(action, "id") - 1);
  } else if (verb == "restore-pds") {
    sim_.restore_pds(int_arg(action, "id") - 1);
    sim_.settle();
  } else if (verb == "partition") {
    sim_.partition_pds(int_arg(action, "pds") - 1);
  } else if (verb == "heal") {
    sim_.heal_pds(int_arg(action, "pds") - 1);
    sim_.settle();
  } else if (verb == "dns-clear") {
    std::string handle = arg_or(action, "handle", "");
    if (handle.empty()) handle = account(action, arg(action, "who")).handle;
    sim_.net().unpublish_handle(handle);
  } else if (verb == "dns-restore") {
    AccountState& acct = account(action, arg(action, "who"));
    sim_.net().publish_handle(acct.handle, acct.did);
  } else if (verb == "tick") {
    std::int64_t micros = 0;
    if (auto it = action.args.find("hours"); it != action.args.end()) {
      micros += std::stoll(it->second) * 3600ll * 1'000'000;
    }
    if (auto it = action.args.find("minutes"); it != action.args.end()) {
      micros += std::stoll(it->second) * 60ll * 1'000'000;
    }
    if (auto it = action.args.find("seconds"); it != action.args.end()) {
      micros += std::stoll(it->second) * 1'000'000;
    }
    sim_.tick(micros);
  } else if (verb == "settle") {
    sim_.settle();
  } else if (verb == "feedgen-fault") {
    sim_.set_feedgen_unavailable(arg(action, "state") == "down");
  } else if (verb == "assert-oracle") {
    do_assert_oracle(action);
  } else if (verb == "assert-handle") {
    AccountState& acct = account(action, arg(action, "who"));
    auto status = sim_.appview().handle_status(acct.did);
    std::string got;
    switch (status.state) {
      case identity::HandleStatus::State::Verified: got = "verified"; break;
      case identity::HandleStatus::State::Invalid: got = "invalid"; break;
      case identity::HandleStatus::State::Unchecked: got = "unchecked"; break;
    }
    check(action, got == arg(action, "state"), "state=" + got + " reason=" + status.reason);
  } else if (verb == "assert-resolves") {
    AccountState& acct = account(action, arg(action, "who"));
    auto env = sim_.resolver_env();
    auto did = identity::Did::parse(acct.did);
    auto doc = identity::resolve_did(*did, env);
    if (!doc.ok()) {
      check(action, false, "unresolvable");
      return;
    }
    std::string want_url = sim_.pds(int_arg(action, "pds") - 1).config().url;
    check(action, doc.document->pds_url == want_url,
          "pds_url=" + doc.document->pds_url);
  } else if (verb == "assert-timeline") {
    AccountState& acct = account(action, arg(action, "viewer"));
    auto page = sim_.appview().get_timeline(acct.did, viewer_ctx(arg(action, "viewer")),
                                            std::nullopt, 1000);
    if (!page.ok()) {
      check(action, false, page.error());
      return;
    }
    std::set<std::string> uris;
    for (const auto& item : page.value().items) uris.insert(item.post.uri);
    bool ok = true;
    std::string detail;
    for (const std::string& id : split_list(arg_or(action, "contains", ""))) {
      if (!uris.count(ref(action, id))) {
        ok = false;
        detail += "missing " + id + "; ";
      }
    }
    for (const std::string& id : split_list(arg_or(action, "absent", ""))) {
      if (uris.count(ref(action, id))) {
        ok = false;
        detail += "unexpected " + id + "; ";
      }
    }
    if (auto it = action.args.find("count"); it != action.args.end()) {
      if (static_cast<int>(page.value().items.size()) != std::stoi(it->second)) {
        ok = false;
        detail += "count=" + std::to_string(page.value().items.size()) + "; ";
      }
    }
    check(action, ok, detail);
  } else if (verb == "assert-thread") {
    std::string uri = ref(action, arg(action, "post"));
    auto thread =
        sim_.appview().get_thread(uri, viewer_ctx(arg_or(action, "viewer", "")));
    std::set<std::string> uris;
    std::function<void(const appview::ThreadNode&)> walk =
        [&](const appview::ThreadNode& node) {
          uris.insert(node.post.uri);
          for (const auto& child : node.replies) walk(child);
        };
    bool ok = true;
    std::string detail;
    if (thread.ok()) {
      walk(thread.value());
    } else if (arg_or(action, "error", "") == thread.error()) {
      check(action, true, "");
      return;
    } else {
      check(action, false, thread.error());
      return;
    }
    for (const std::string& id : split_list(arg_or(action, "contains", ""))) {
      if (!uris.count(ref(action, id))) {
        ok = false;
        detail += "missing " + id + "; ";
      }
    }
    for (const std::string& id : split_list(arg_or(action, "absent", ""))) {
      if (uris.count(ref(action, id))) {
        ok = false;
        detail += "unexpected " + id + "; ";
      }
    }
    if (auto it = action.args.find("size"); it != action.args.end()) {
      if (static_cast<int>(uris.size()) != std::stoi(it->second)) {
        ok = false;
        detail += "size=" + std::to_string(uris.size()) + "; ";
      }
    }
    check(action, ok, detail);
  } else if (verb == "assert-likes") {
    std::string uri = ref(action, arg(action, "post"));
    auto post = sim_.appview().get_post(uri, viewer_ctx(arg_or(action, "viewer", "")));
    std::int64_t got = post.ok() ? post.value().like_count : -1;
    check(action, got == std::stoll(arg(action, "count")),
          "count=" + std::to_string(got));
  } else if (verb == "assert-followers") {
    AccountState& acct = account(action, arg(action, "who"));
    auto followers = sim_.appview().get_followers(acct.did);
    bool ok = followers.ok();
    std::string detail = followers.ok() ? "" : followers.error();
    if (ok) {
      std::set<std::string> got(followers.value().begin(), followers.value().end());
      if (auto it = action.args.find("count"); it != action.args.end()) {
        if (static_cast<int>(got.size()) != std::stoi(it->second)) {
          ok = false;
          detail += "count=" + std::to_string(got.size()) + "; ";
        }
      }
      for (const std::string& name : split_list(arg_or(action, "contains", ""))) {
        if (!got.count(account(action, name).did)) {
          ok = false;
          detail += "missing " + name + "; ";
        }
      }
      for (const std::string& name : split_list(arg_or(action, "absent", ""))) {
        if (got.count(account(action, name).did)) {
          ok = false;
          detail += "unexpected " + name + "; ";
        }
      }
    }
    check(action, ok, detail);
  } else if (verb == "assert-records") {
    AccountState& acct = account(action, arg(action, "who"));
    const repo::Repository* repository = sim_.pds(acct.pds).repository(acct.did);
    if (!repository) {
      check(action, false, "repo missing");
      return;
    }
    size_t got = repository->list_records().size();
    check(action, got == static_cast<size_t>(std::stoi(arg(action, "count"))),
          "count=" + std::to_string(got));
  } else if (verb == "assert-replicas-match") {
    bool ok = true;
    std::string detail;
    for (const auto& [name, acct] : accounts_) {
      if (!sim_.pds_alive(acct.pds)) continue;
      const repo::Repository* repository = sim_.pds(acct.pds).repository(acct.did);
      auto heads = sim_.relay(0).replica_heads();
      auto head = heads.find(acct.did);
      if (head == heads.end() || !(head->second == repository->head())) {
        ok = false;
        detail += name + " replica stale; ";
      }
    }
    check(action, ok, detail);
  } else if (verb == "assert-feed") {
    std::string feed = feed_uris_.at(arg(action, "feed"));
    auto page = sim_.appview().get_feed(feed, viewer_ctx(arg_or(action, "viewer", "")),
                                        std::nullopt, 100);
    bool expect_unavailable = arg_or(action, "error", "") == "generator-unavailable";
    if (!page.ok()) {
      check(action, expect_unavailable, page.error());
      return;
    }
    std::set<std::string> uris;
    for (const auto& post : page.value().posts) uris.insert(post.uri);
    bool ok = !expect_unavailable;
    std::string detail;
    for (const std::string& id : split_list(arg_or(action, "contains", ""))) {
      if (!uris.count(ref(action, id))) {
        ok = false;
        detail += "missing " + id + "; ";
      }
    }
    for (const std::string& id : split_list(arg_or(action, "absent", ""))) {
      if (uris.count(ref(action, id))) {
        ok = false;
        detail += "unexpected " + id + "; ";
      }
    }
    if (auto it = action.args.find("count"); it != action.args.end()) {
      if (static_cast<int>(page.value().posts.size()) != std::stoi(it->second)) {
        ok = false;
        detail += "count=" + std::to_string(page.value().posts.size()) + "; ";
      }
    }
    check(action, ok, detail);
  } else if (verb == "assert-label") {
    std::string uri = ref(action, arg(action, "post"));
    auto post = sim_.appview().get_post(uri, viewer_ctx(arg(action, "viewer")));
    std::string want = arg_or(action, "has", "");
    if (want == "none" || want.empty()) {
      bool clean = post.ok() && post.value().labels.empty();
      check(action, clean,
            post.ok() ? "labels=" + std::to_string(post.value().labels.size())
                      : post.error());
      return;
    }
    bool found = false;
    if (post.ok()) {
      for (const auto& [src, val] : post.value().labels) {
        (void)src;
        if (val == want) found = true;
      }
    }
    check(action, found, post.ok() ? "label absent" : post.error());
  } else if (verb == "assert-post-visible") {
    std::string uri = ref(action, arg(action, "post"));
    auto post = sim_.appview().get_post(uri, viewer_ctx(arg(action, "viewer")));
    bool want = arg(action, "visible") == "yes";
    check(action, post.ok() == want, post.ok() ? "visible" : post.error());
  } else if (verb == "assert-did-unchanged") {
    AccountState& acct = account(action, arg(action, "who"));
    // the DID recorded at account creation must still resolve to the handle
    auto env = sim_.resolver_env();
    auto did = identity::Did::parse(acct.did);
    auto doc = identity::resolve_did(*did, env);
    check(action, doc.ok() && doc.document->handle == acct.handle,
          doc.ok() ? "handle=" + doc.document->handle : "unresolvable");
  } else {
    bail(action, "unknown verb");
  }
}

}  // namespace

ScenarioReport run_scenario(const Scenario& scenario,
                            std::optional<std::uint64_t> seed_override) {
  ScenarioRunner runner(scenario, seed_override.value_or(scenario.seed));
  return runner.run();
}

}  // namespace atproto::sim
