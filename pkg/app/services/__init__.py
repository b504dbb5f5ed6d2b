# empty init file
