#include <stdio.h>
#include <stdlib.h>

int main(void) {
    const char *v = getenv("http_proxy");
    printf("%s\n", v ? v : "(unset)");
    return 0;
}
