#ifndef SERBF_ERROR_HPP
#define SERBF_ERROR_HPP

#include <stdexcept>
#include <string>

namespace serbf {

/// Input file is missing or unreadable.
class FileError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Input file exists but its contents are malformed.
class ParseError : public std::runtime_error
{
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line)
    {
    }

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

} // namespace serbf

#endif // SERBF_ERROR_HPP
