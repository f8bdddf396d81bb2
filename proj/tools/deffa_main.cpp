#include "deffa/cli.hpp"

int main(int argc, char** argv)
{
    return deffa::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
