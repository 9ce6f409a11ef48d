#include <stdio.h>
#include <stdlib.h>

int main(void) {
    const char *v = getenv("KX_SURELY_NOT_SET_12345");
    printf("missing=%s\n", v ? v : "(unset)");
    return v ? 1 : 0;
}
