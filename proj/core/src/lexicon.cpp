#include "atproto/lexicon.hpp"

#include "atproto/identity.hpp"
#include "atproto/repo.hpp"

namespace atproto::lexicon {

using codec::Value;

std::optional<AtUri> AtUri::parse(std::string_view uri) {
  if (!uri.starts_with("at://")) return std::nullopt;
  std::string_view rest = uri.substr(5);
  size_t s1 = rest.find('/');
  if (s1 == std::string_view::npos) return std::nullopt;
  size_t s2 = rest.find('/', s1 + 1);
  if (s2 == std::string_view::npos) return std::nullopt;
  AtUri out;
  out.did = std::string(rest.substr(0, s1));
  out.collection = std::string(rest.substr(s1 + 1, s2 - s1 - 1));
  out.rkey = std::string(rest.substr(s2 + 1));
  if (!identity::Did::parse(out.did)) return std::nullopt;
  if (!repo::RecordPath::valid_collection(out.collection)) return std::nullopt;
  if (!repo::RecordPath::valid_rkey(out.rkey)) return std::nullopt;
  return out;
}

std::optional<StrongRef> strong_ref_from(const Value& v) {
  if (!v.is_map()) return std::nullopt;
  const Value* uri = v.at("uri");
  const Value* cid = v.at("cid");
  if (!uri || !uri->is_string() || !cid || !cid->is_link()) return std::nullopt;
  if (!AtUri::parse(uri->as_string())) return std::nullopt;
  return StrongRef{uri->as_string(), cid->as_link()};
}

codec::Value strong_ref_value(const StrongRef& ref) {
  Value::Map m;
  m.emplace("uri", Value(ref.uri));
  m.emplace("cid", Value(codec::CidLink{ref.cid}));
  return Value(std::move(m));
}

size_t count_codepoints(std::string_view text) {
  size_t n = 0;
  for (char c : text) {
    if ((static_cast<unsigned char>(c) & 0xc0) != 0x80) ++n;
  }
  return n;
}

namespace {

void require_string(const Value& rec, const char* field, bool required,
                    ValidationResult& out) {
  const Value* v = rec.at(field);
  if (!v) {
    if (required) out.violations.push_back({std::string("missing-") + field, field});
    return;
  }
  if (!v->is_string()) {
    out.violations.push_back({std::string("bad-") + field, "expected string"});
  }
}

void require_strong_ref(const Value& rec, const char* field, ValidationResult& out) {
  const Value* v = rec.at(field);
  if (!v) {
    out.violations.push_back({std::string("missing-") + field, field});
    return;
  }
  if (!v->is_map()) {
    out.violations.push_back({std::string("bad-") + field, "expected ref map"});
    return;
  }
  const Value* uri = v->at("uri");
  const Value* cid = v->at("cid");
  if (!uri || !uri->is_string() || !AtUri::parse(uri->as_string())) {
    out.violations.push_back({"bad-uri", std::string(field) + ".uri"});
  }
  if (!cid || !cid->is_link()) {
    out.violations.push_back({"missing-cid", std::string(field) + ".cid"});
  }
}

void require_did(const Value& rec, const char* field, ValidationResult& out) {
  const Value* v = rec.at(field);
  if (!v || !v->is_string()) {
    out.violations.push_back({std::string("missing-") + field, field});
    return;
  }
  if (!identity::Did::parse(v->as_string())) {
    out.violations.push_back({"bad-did", field});
  }
}

void validate_post(const Value& rec, ValidationResult& out) {
  const Value* text = rec.at("text");
  if (!text || !text->is_string()) {
    out.violations.push_back({"missing-text", "post requires text"});
  } else if (count_codepoints(text->as_string()) > kMaxPostChars) {
    out.violations.push_back({"text-too-long", "posts carry at most 300 characters"});
  }
  const Value* created = rec.at("createdAt");
  if (!created || !created->is_int()) {
    out.violations.push_back({"missing-createdAt", "post requires createdAt"});
  }
  if (const Value* reply = rec.at("reply")) {
    if (!reply->is_map()) {
      out.violations.push_back({"bad-reply", "expected map"});
    } else {
      require_strong_ref(*reply, "root", out);
      require_strong_ref(*reply, "parent", out);
    }
  }
  if (const Value* embed = rec.at("embed")) {
    if (!embed->is_map()) {
      out.violations.push_back({"bad-embed", "expected map"});
    } else if (const Value* images = embed->at("images")) {
      if (!images->is_array()) {
        out.violations.push_back({"bad-images", "expected array"});
      } else {
        if (images->as_array().size() > kMaxPostImages) {
          out.violations.push_back({"too-many-images", "posts carry at most 4 images"});
        }
        for (const Value& img : images->as_array()) {
          if (!img.is_link()) {
            out.violations.push_back({"bad-image-ref", "expected blob CID link"});
          }
        }
      }
    }
  }
  if (const Value* mentions = rec.at("mentions")) {
    if (!mentions->is_array()) {
      out.violations.push_back({"bad-mentions", "expected array"});
    } else {
      for (const Value& m : mentions->as_array()) {
        if (!m.is_string() || !identity::Did::parse(m.as_string())) {
          out.violations.push_back({"bad-did", "mentions"});
        }
      }
    }
  }
}

void validate_threadgate(const Value& rec, ValidationResult& out) {
  require_strong_ref(rec, "post", out);
  const Value* allow = rec.at("allow");
  if (!allow || !allow->is_array()) {
    out.violations.push_back({"missing-allow", "threadgate requires allow rules"});
    return;
  }
  for (const Value& rule : allow->as_array()) {
    if (!rule.is_string()) {
      out.violations.push_back({"bad-allow-rule", "expected string"});
      continue;
    }
    const std::string& r = rule.as_string();
    bool known = r == "anyone" || r == "followed" || r == "mentioned" ||
                 r.starts_with("list/");
    if (!known) out.violations.push_back({"bad-allow-rule", r});
  }
}

void validate_list(const Value& rec, ValidationResult& out) {
  require_string(rec, "name", true, out);
  const Value* purpose = rec.at("purpose");
  if (!purpose || !purpose->is_string() ||
      (purpose->as_string() != "modlist" && purpose->as_string() != "curatelist")) {
    out.violations.push_back({"bad-purpose", "modlist or curatelist"});
  }
}

void validate_listitem(const Value& rec, ValidationResult& out) {
  require_did(rec, "subject", out);
  const Value* list = rec.at("list");
  if (!list || !list->is_string() || !AtUri::parse(list->as_string())) {
    out.violations.push_back({"bad-list", "expected list at-uri"});
  }
}

void validate_generator(const Value& rec, ValidationResult& out) {
  require_did(rec, "did", out);
  require_string(rec, "displayName", true, out);
}

void validate_labeler(const Value& rec, ValidationResult& out) {
  const Value* values = rec.at("labelValues");
  if (!values || !values->is_array()) {
    out.violations.push_back({"missing-labelValues", "labeler declares its label values"});
    return;
  }
  for (const Value& v : values->as_array()) {
    if (!v.is_string()) out.violations.push_back({"bad-label-value", "expected string"});
  }
}

}  // namespace

bool known_collection(const std::string& collection) {
  return collection == kPost || collection == kLike || collection == kRepost ||
         collection == kThreadgate || collection == kGenerator || collection == kFollow ||
         collection == kBlock || collection == kList || collection == kListItem ||
         collection == kProfile || collection == kLabelerService;
}

ValidationResult validate_record(const std::string& collection, const Value& record) {
  ValidationResult out;
  if (!record.is_map()) {
    out.ok = false;
    out.violations.push_back({"not-a-map", "records are maps"});
    return out;
  }
  if (const Value* type = record.at("$type")) {
    if (!type->is_string() || type->as_string() != collection) {
      out.violations.push_back({"type-mismatch", "$type must equal the collection"});
    }
  }
  if (!known_collection(collection)) {
    out.unknown_lexicon = true;
    return out;  // open extensibility: unknown collections pass untouched
  }
  if (collection == kPost) {
    validate_post(record, out);
  } else if (collection == kLike || collection == kRepost) {
    require_strong_ref(record, "subject", out);
  } else if (collection == kFollow || collection == kBlock) {
    require_did(record, "subject", out);
  } else if (collection == kProfile) {
    require_string(record, "displayName", false, out);
    require_string(record, "description", false, out);
  } else if (collection == kList) {
    validate_list(record, out);
  } else if (collection == kListItem) {
    validate_listitem(record, out);
  } else if (collection == kThreadgate) {
    validate_threadgate(record, out);
  } else if (collection == kGenerator) {
    validate_generator(record, out);
  } else if (collection == kLabelerService) {
    validate_labeler(record, out);
  }
  out.ok = out.violations.empty();
  return out;
}

}  // namespace atproto::lexicon
