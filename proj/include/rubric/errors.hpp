#pragma once

#include <stdexcept>
#include <string>

namespace rubric {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// -- gateway --
struct EndpointUnknown : Error { using Error::Error; };
struct TransportFailure : Error { using Error::Error; };
struct NonSuccessStatus : Error {
    NonSuccessStatus(int status, const std::string& body)
        : Error("endpoint returned status " + std::to_string(status) + ": " + body),
          status(status), body(body) {}
    int status;
    std::string body;
};
struct ImageUnreadable : Error { using Error::Error; };
struct FixtureMissing : Error { using Error::Error; };
struct FixtureMalformed : Error { using Error::Error; };

// -- parsing --
struct NoJsonFound : Error { using Error::Error; };
struct JsonMalformed : Error { using Error::Error; };
struct SchemaViolation : Error { using Error::Error; };

// -- rubric synthesis --
struct CommitteeCollapse : Error { using Error::Error; };
struct EmptyAfterFilter : Error { using Error::Error; };
struct SampleSkipped : Error { using Error::Error; };

// -- judging / rewards --
struct AlignmentMismatch : Error { using Error::Error; };
struct ZeroTotalWeight : Error { using Error::Error; };
struct ScoreUnparseable : Error { using Error::Error; };
struct MissingReference : Error { using Error::Error; };

// -- grpo --
struct GroupTooSmall : Error { using Error::Error; };
struct NonFiniteRatio : Error { using Error::Error; };
struct UnknownCaption : Error { using Error::Error; };

// -- eval --
struct SubjectAbsent : Error { using Error::Error; };
struct InconsistentSources : Error { using Error::Error; };
struct MissingAssessment : Error { using Error::Error; };

// -- store --
struct CacheConflict : Error { using Error::Error; };
struct StoreCorrupt : Error { using Error::Error; };
struct IoFailure : Error { using Error::Error; };

}  // namespace rubric
