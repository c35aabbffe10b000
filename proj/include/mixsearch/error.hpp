#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mixsearch {

enum class ErrorCode {
	InvalidInput,
	InsufficientSamples,
	RankDeficient,
	DegenerateMean,
	NonInformativeSideInfo,
};

inline std::string_view to_string(ErrorCode code) {
	switch (code) {
	case ErrorCode::InvalidInput: return "InvalidInput";
	case ErrorCode::InsufficientSamples: return "InsufficientSamples";
	case ErrorCode::RankDeficient: return "RankDeficient";
	case ErrorCode::DegenerateMean: return "DegenerateMean";
	case ErrorCode::NonInformativeSideInfo: return "NonInformativeSideInfo";
	}
	return "Unknown";
}

/// Exception carrying a machine-readable code. All library failures go through this type.
class Error : public std::runtime_error {
public:
	Error(ErrorCode code, const std::string& what)
	    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

	ErrorCode code() const noexcept { return code_; }

	/// Input-shape problems are configuration errors; everything else is numerical.
	bool is_numerical() const noexcept {
		return code_ != ErrorCode::InvalidInput && code_ != ErrorCode::InsufficientSamples;
	}

private:
	ErrorCode code_;
};

namespace detail {
inline void require(bool cond, ErrorCode code, const char* msg) {
	if (!cond)
		throw Error(code, msg);
}
} // namespace detail

} // namespace mixsearch
