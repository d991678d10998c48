#ifndef VGRID_FEDERATION_HPP
#define VGRID_FEDERATION_HPP

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vgrid/bytes.hpp"
#include "vgrid/caps.hpp"
#include "vgrid/ids.hpp"
#include "vgrid/tag.hpp"

namespace vgrid {

// ---------------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------------

// Host-side identity issued at subscription. The tag binds (node, epoch)
// under the coordinator key; a compromised host is one whose tag no longer
// verifies.
struct Credential {
    NodeId node;
    Tag16 secret_tag;
    std::uint64_t issued_epoch{0};

    Bytes payload_bytes() const {
        ByteWriter w;
        w.u64(node.value);
        w.u64(issued_epoch);
        return w.take();
    }
};

// A mobile-agent instance rendered as a credential: delegable, attenuable,
// revocable. depth 0 <=> main instance (no parent).
struct CapabilityToken {
    TokenId token_id;
    std::optional<TokenId> parent;
    NodeId subject;
    CapSet caps;
    std::optional<MissionId> mission;
    std::uint64_t issued_epoch{0};
    std::uint32_t depth{0};
    Tag16 auth_tag;

    // Canonical layout, fields in declaration order. The tag covers
    // everything before it.
    Bytes payload_bytes() const {
        ByteWriter w;
        w.u64(token_id.value);
        w.u8(parent ? 1 : 0);
        if (parent) w.u64(parent->value);
        w.u64(subject.value);
        auto caps_sorted = caps.sorted();
        w.u32(static_cast<std::uint32_t>(caps_sorted.size()));
        for (auto c : caps_sorted) w.u8(static_cast<std::uint8_t>(c));
        w.u8(mission ? 1 : 0);
        if (mission) w.u64(mission->value);
        w.u64(issued_epoch);
        w.u32(depth);
        return w.take();
    }

    Bytes serialize() const {
        Bytes b = payload_bytes();
        b.insert(b.end(), auth_tag.bytes.begin(), auth_tag.bytes.end());
        return b;
    }

    // Rejects non-canonical encodings (unsorted or duplicate capability
    // entries, trailing bytes, depth/parent mismatch).
    static CapabilityToken deserialize(std::span<const std::uint8_t> data) {
        ByteReader r(data);
        CapabilityToken t;
        t.token_id = TokenId{r.u64()};
        std::uint8_t has_parent = r.u8();
        if (has_parent > 1) throw ByteError("bad parent flag");
        if (has_parent) t.parent = TokenId{r.u64()};
        t.subject = NodeId{r.u64()};
        std::uint32_t ncaps = r.u32();
        if (ncaps > kCapabilityCount) throw ByteError("bad capability count");
        int prev = -1;
        for (std::uint32_t i = 0; i < ncaps; ++i) {
            std::uint8_t c = r.u8();
            if (c >= kCapabilityCount || static_cast<int>(c) <= prev)
                throw ByteError("non-canonical capability set");
            prev = c;
            t.caps.insert(static_cast<Capability>(c));
        }
        std::uint8_t has_mission = r.u8();
        if (has_mission > 1) throw ByteError("bad mission flag");
        if (has_mission) t.mission = MissionId{r.u64()};
        t.issued_epoch = r.u64();
        t.depth = r.u32();
        if ((t.depth == 0) != !t.parent) throw ByteError("depth/parent mismatch");
        r.raw(t.auth_tag.bytes);
        if (!r.exhausted()) throw ByteError("trailing bytes");
        return t;
    }
};

// Versioned bundle the coordinator disseminates whenever membership or the
// revocation list changes.
struct PolicyEpoch {
    std::uint64_t version{0};
    std::set<NodeId> membership;
    std::set<TokenId> revoked;
    PolicyId active_policy;

    Bytes serialize() const {
        ByteWriter w;
        w.u64(version);
        w.u32(static_cast<std::uint32_t>(membership.size()));
        for (auto n : membership) w.u64(n.value);
        w.u32(static_cast<std::uint32_t>(revoked.size()));
        for (auto t : revoked) w.u64(t.value);
        w.str(active_policy);
        return w.take();
    }

    static PolicyEpoch deserialize(std::span<const std::uint8_t> data) {
        ByteReader r(data);
        PolicyEpoch e;
        e.version = r.u64();
        std::uint32_t nm = r.u32();
        std::uint64_t prev = 0;
        bool first = true;
        for (std::uint32_t i = 0; i < nm; ++i) {
            std::uint64_t v = r.u64();
            if (!first && v <= prev) throw ByteError("non-canonical membership set");
            prev = v;
            first = false;
            e.membership.insert(NodeId{v});
        }
        std::uint32_t nr = r.u32();
        first = true;
        for (std::uint32_t i = 0; i < nr; ++i) {
            std::uint64_t v = r.u64();
            if (!first && v <= prev) throw ByteError("non-canonical revoked set");
            prev = v;
            first = false;
            e.revoked.insert(TokenId{v});
        }
        e.active_policy = r.str();
        if (!r.exhausted()) throw ByteError("trailing bytes");
        return e;
    }
};

// ---------------------------------------------------------------------------
// Decisions and results
// ---------------------------------------------------------------------------

enum class RejectReason : std::uint8_t { Denylisted };

inline const char* reject_reason_name(RejectReason r) {
    switch (r) {
        case RejectReason::Denylisted: return "denylisted";
    }
    return "?";
}

struct SubscriptionAccepted {
    CapabilityToken root_token;
};
struct SubscriptionRejected {
    RejectReason reason;
};
using SubscriptionDecision = std::variant<SubscriptionAccepted, SubscriptionRejected>;

inline bool accepted(const SubscriptionDecision& d) {
    return std::holds_alternative<SubscriptionAccepted>(d);
}

struct AdmissionRule {
    CapSet allowed = CapSet::all();
    std::set<NodeId> denylist;
};

enum class InvalidReason : std::uint8_t {
    BadTag,
    BrokenAttenuation,
    Revoked,
    SubjectNotMember,
};

inline const char* invalid_reason_name(InvalidReason r) {
    switch (r) {
        case InvalidReason::BadTag: return "bad_tag";
        case InvalidReason::BrokenAttenuation: return "broken_attenuation";
        case InvalidReason::Revoked: return "revoked";
        case InvalidReason::SubjectNotMember: return "subject_not_member";
    }
    return "?";
}

struct ValidationResult {
    std::optional<InvalidReason> reason;  // empty => Valid

    bool valid() const { return !reason.has_value(); }
};

enum class HandshakeSide : std::uint8_t { Agent, Host };

struct Session {
    TokenId agent_token;
    NodeId host;
    std::uint64_t epoch_version{0};
};
struct HandshakeFailure {
    HandshakeSide side;
    InvalidReason reason;
};
using HandshakeResult = std::variant<Session, HandshakeFailure>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class FederationErrc : std::uint8_t {
    AlreadySubscribed,
    NotSubscribed,
    AttenuationViolation,
    ParentRevoked,
    UnknownToken,
};

class FederationError : public std::runtime_error {
  public:
    FederationError(FederationErrc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    FederationErrc code() const { return code_; }

  private:
    FederationErrc code_;
};

// ---------------------------------------------------------------------------
// Dissemination plan
// ---------------------------------------------------------------------------

// Delivery plan for a freshly advanced epoch: every connected node paired
// with the new version, ascending by node for determinism. The caller turns
// each pair into a delivery event at now + dissemination latency.
inline std::vector<std::pair<NodeId, std::uint64_t>> disseminate(
    const PolicyEpoch& epoch, const std::set<NodeId>& membership) {
    std::vector<std::pair<NodeId, std::uint64_t>> plan;
    plan.reserve(membership.size());
    for (auto n : membership) plan.emplace_back(n, epoch.version);
    return plan;
}

// ---------------------------------------------------------------------------
// Coordinator
// ---------------------------------------------------------------------------

// The identity-provider side: subscription, root issuance, hierarchical
// delegation with attenuation, revocation cascades and epoch sequencing.
// Single-writer by contract; issued tokens and epochs are immutable values.
class Coordinator {
  public:
    explicit Coordinator(TagKey key, PolicyId active_policy = "default")
        : key_(key) {
        epoch_.version = 0;
        epoch_.active_policy = std::move(active_policy);
        history_.push_back(epoch_);
    }

    static Coordinator from_seed(std::uint64_t seed, PolicyId active_policy = "default") {
        return Coordinator(TagKey::from_seed(seed), std::move(active_policy));
    }

    const PolicyEpoch& current_epoch() const { return epoch_; }
    const std::vector<PolicyEpoch>& epoch_history() const { return history_; }
    const TagKey& key() const { return key_; }

    struct AuditRecord {
        NodeId node;
        bool accepted{false};
        std::string detail;
    };
    const std::vector<AuditRecord>& audit_log() const { return audit_; }

    bool is_member(NodeId node) const { return epoch_.membership.count(node) != 0; }

    // Admission. On acceptance the node joins membership, the epoch
    // advances, and a depth-0 token with requested ∩ allowed caps is
    // issued. Rejection leaves no trace beyond the audit record.
    SubscriptionDecision subscribe(NodeId node, CapSet requested_caps,
                                   const AdmissionRule& rule) {
        if (is_member(node))
            throw FederationError(FederationErrc::AlreadySubscribed,
                                  "node " + to_string(node) + " already subscribed");
        if (rule.denylist.count(node)) {
            audit_.push_back({node, false, "denylisted"});
            return SubscriptionRejected{RejectReason::Denylisted};
        }

        epoch_.membership.insert(node);
        advance_epoch();

        CapabilityToken root;
        root.token_id = next_token_id();
        root.subject = node;
        root.caps = requested_caps.intersect(rule.allowed);
        root.issued_epoch = epoch_.version;
        root.depth = 0;
        root.auth_tag = keyed_tag(key_, root.payload_bytes());
        remember(root);

        Credential cred;
        cred.node = node;
        cred.issued_epoch = epoch_.version;
        cred.secret_tag = keyed_tag(key_, cred.payload_bytes());
        credentials_[node] = cred;
        roots_[node] = root.token_id;

        audit_.push_back({node, true, "accepted"});
        return SubscriptionAccepted{root};
    }

    // Churn exit: the node leaves membership and its whole token tree is
    // revoked in a single epoch advance.
    PolicyEpoch disconnect(NodeId node) {
        if (!is_member(node))
            throw FederationError(FederationErrc::NotSubscribed,
                                  "node " + to_string(node) + " not subscribed");
        epoch_.membership.erase(node);
        auto it = roots_.find(node);
        if (it != roots_.end()) {
            for (auto id : collect_subtree(it->second)) epoch_.revoked.insert(id);
            roots_.erase(it);
        }
        credentials_.erase(node);
        advance_epoch();
        return epoch_;
    }

    // Hierarchical instantiation: the child inherits a subset of the
    // parent's functionality, never more.
    CapabilityToken issue_delegate(const CapabilityToken& parent, MissionId mission,
                                   CapSet requested_caps) {
        ValidationResult parent_check = validate_chain(parent, epoch_);
        if (!parent_check.valid())
            throw FederationError(FederationErrc::ParentRevoked,
                                  std::string("parent token invalid: ") +
                                      invalid_reason_name(*parent_check.reason));
        if (!requested_caps.subset_of(parent.caps))
            throw FederationError(FederationErrc::AttenuationViolation,
                                  "requested capabilities exceed parent's");

        CapabilityToken child;
        child.token_id = next_token_id();
        child.parent = parent.token_id;
        child.subject = parent.subject;
        child.caps = requested_caps;
        child.mission = mission;
        child.issued_epoch = epoch_.version;
        child.depth = parent.depth + 1;
        child.auth_tag = keyed_tag(key_, child.payload_bytes());
        remember(child);
        children_[parent.token_id].push_back(child.token_id);
        return child;
    }

    // Revokes the subtree rooted at token_id. Returns exactly the newly
    // revoked ids; revoking an already-revoked token is a no-op and does
    // not advance the epoch.
    std::set<TokenId> revoke(TokenId token_id) {
        if (!registry_.count(token_id))
            throw FederationError(FederationErrc::UnknownToken,
                                  "unknown token " + to_string(token_id));
        std::set<TokenId> newly;
        for (auto id : collect_subtree(token_id))
            if (!epoch_.revoked.count(id)) newly.insert(id);
        if (newly.empty()) return newly;
        for (auto id : newly) epoch_.revoked.insert(id);
        advance_epoch();
        return newly;
    }

    // Chain validation. Check order is fixed so golden traces are stable:
    // tags first (structural), then revocation, then root membership, then
    // per-hop attenuation; the first failure is reported.
    ValidationResult validate_chain(const CapabilityToken& token,
                                    const PolicyEpoch& epoch) const {
        std::vector<const CapabilityToken*> chain;  // leaf..root
        const CapabilityToken* cur = &token;
        while (true) {
            if (keyed_tag(key_, cur->payload_bytes()) != cur->auth_tag)
                return {InvalidReason::BadTag};
            if ((cur->depth == 0) != !cur->parent) return {InvalidReason::BadTag};
            chain.push_back(cur);
            if (!cur->parent) break;
            auto it = registry_.find(*cur->parent);
            if (it == registry_.end()) return {InvalidReason::BadTag};
            cur = &it->second;
        }
        for (auto* t : chain)
            if (epoch.revoked.count(t->token_id)) return {InvalidReason::Revoked};
        if (!epoch.membership.count(chain.back()->subject))
            return {InvalidReason::SubjectNotMember};
        for (std::size_t i = 0; i + 1 < chain.size(); ++i)
            if (!chain[i]->caps.subset_of(chain[i + 1]->caps))
                return {InvalidReason::BrokenAttenuation};
        return {};
    }

    // Agent <-> host mutual authentication under the given epoch view.
    // Agent side is checked first.
    HandshakeResult handshake(const CapabilityToken& agent_token,
                              const Credential& host_credential,
                              const PolicyEpoch& epoch) const {
        ValidationResult agent_check = validate_chain(agent_token, epoch);
        if (!agent_check.valid())
            return HandshakeFailure{HandshakeSide::Agent, *agent_check.reason};
        if (keyed_tag(key_, host_credential.payload_bytes()) != host_credential.secret_tag)
            return HandshakeFailure{HandshakeSide::Host, InvalidReason::BadTag};
        if (!epoch.membership.count(host_credential.node))
            return HandshakeFailure{HandshakeSide::Host, InvalidReason::SubjectNotMember};
        return Session{agent_token.token_id, host_credential.node, epoch.version};
    }

    std::optional<Credential> host_credential(NodeId node) const {
        auto it = credentials_.find(node);
        if (it == credentials_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<CapabilityToken> lookup(TokenId id) const {
        auto it = registry_.find(id);
        if (it == registry_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<TokenId> root_token_of(NodeId node) const {
        auto it = roots_.find(node);
        if (it == roots_.end()) return std::nullopt;
        return it->second;
    }

  private:
    TokenId next_token_id() { return TokenId{++token_counter_}; }

    void remember(const CapabilityToken& t) { registry_.emplace(t.token_id, t); }

    void advance_epoch() {
        epoch_.version += 1;
        history_.push_back(epoch_);
    }

    std::vector<TokenId> collect_subtree(TokenId root) const {
        std::vector<TokenId> out;
        std::vector<TokenId> stack{root};
        while (!stack.empty()) {
            TokenId id = stack.back();
            stack.pop_back();
            out.push_back(id);
            auto it = children_.find(id);
            if (it != children_.end())
                for (auto c : it->second) stack.push_back(c);
        }
        return out;
    }

    TagKey key_;
    PolicyEpoch epoch_;
    std::vector<PolicyEpoch> history_;
    std::uint64_t token_counter_{0};
    std::map<TokenId, CapabilityToken> registry_;
    std::map<TokenId, std::vector<TokenId>> children_;
    std::map<NodeId, TokenId> roots_;
    std::map<NodeId, Credential> credentials_;
    std::vector<AuditRecord> audit_;
};

}  // namespace vgrid

#endif
