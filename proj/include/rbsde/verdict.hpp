#pragma once

#include <string_view>

namespace rbsde {

enum class Verdict { Pass, Fail, NotApplicable, Informational };

constexpr std::string_view to_string(Verdict v) noexcept {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        case Verdict::NotApplicable: return "not-applicable";
        case Verdict::Informational: return "informational";
    }
    return "?";
}

}  // namespace rbsde
