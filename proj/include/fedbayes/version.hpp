#ifndef FEDBAYES_VERSION_HPP
#define FEDBAYES_VERSION_HPP

#define FEDBAYES_VERSION "0.1.0"

#endif
